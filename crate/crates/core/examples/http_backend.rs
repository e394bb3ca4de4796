// Score queries over HTTP. A throwaway local server plays the model so the
// example is self-contained; point `HttpConfig` at a real endpoint instead.
//
// ```bash
// cargo run -p scenesense --example http_backend
// ```

use std::error::Error;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use scenesense::lm_backend::{HttpConfig, HttpScorer, LmScorer};
use scenesense::query::render_zero_shot;

/// Answer `/score` requests with minus the word count of each prompt.
fn spawn_toy_model() -> std::io::Result<String> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let url = format!("http://{}", listener.local_addr()?);
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            let mut line = String::new();
            while reader.read_line(&mut line).is_ok_and(|n| n > 0) && line != "\r\n" {
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
                line.clear();
            }
            let mut body = vec![0; length];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let request: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
            let scores: Vec<f64> = request["prompts"]
                .as_array()
                .map(|a| {
                    a.iter()
                        .map(|p| -(p.as_str().unwrap_or("").split_whitespace().count() as f64))
                        .collect()
                })
                .unwrap_or_default();
            let reply = serde_json::json!({ "scores": scores }).to_string();
            let mut stream = reader.into_inner();
            let _ = write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    Ok(url)
}

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let url = spawn_toy_model()?;
    let scorer = HttpScorer::new(HttpConfig {
        batch_size: 2,
        ..HttpConfig::new(url, "toy-model")
    })?;
    let rooms = ["bathroom", "living room", "office"].map(String::from).to_vec();
    let bundle = render_zero_shot(&["sofa", "tv"], &rooms)?;
    let texts: Vec<String> = bundle.per_label().iter().map(|(_, t)| t.clone()).collect();
    let scores = scorer.batch_score(&texts)?;
    for (text, score) in texts.iter().zip(&scores) {
        println!("{score:>5}  {text}");
    }
    assert_eq!(scores, [-10.0, -11.0, -10.0]);
    println!("backend: {:?}", scorer.metadata());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
