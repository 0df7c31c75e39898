//! Starts the server on a free port in a temporary store, submits two maps
//! over HTTP, waits for the ticker to evolve a map and open a poll, then
//! votes and fetches the tallies.
//!
//! ```text
//! cargo run --release -p aesthevo-server --example serve_and_vote
//! ```

use std::time::Duration;

use aesthevo_server::{start, ServerConfig, SESSION_COOKIE};
use serde_json::{json, Value};

fn cells(size: usize, shift: usize) -> Vec<Vec<u8>> {
    (0..size).map(|r| (0..size).map(|c| ((r + c + shift) % 4) as u8).collect()).collect()
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("aesthevo-serve-demo-{}", std::process::id()));
    let cfg = ServerConfig {
        port: 0,
        data_dir: dir.clone(),
        tick_secs: 1,
        homogeneous_chance: 0.0,
        ..ServerConfig::default()
    };
    let server = start(cfg).await?;
    let base = format!("http://{}", server.addr);
    println!("serving on {base}");
    let client = reqwest::Client::new();

    let first = client
        .post(format!("{base}/api/maps"))
        .json(&json!({"tileset": "dungeon", "size": 6, "cells": cells(6, 0), "author": "@demo"}))
        .send()
        .await?;
    let cookie = first
        .headers()
        .get(reqwest::header::SET_COOKIE)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.split(';').next())
        .ok_or("no session cookie")?
        .to_string();
    println!("submitted: {} {}", first.status(), first.text().await?);
    assert!(cookie.starts_with(SESSION_COOKIE));
    let second = client
        .post(format!("{base}/api/maps"))
        .header(reqwest::header::COOKIE, &cookie)
        .json(&json!({"tileset": "dungeon", "size": 8, "cells": cells(8, 1)}))
        .send()
        .await?;
    println!("submitted: {} {}", second.status(), second.text().await?);

    let poll = loop {
        let resp = client.get(format!("{base}/api/polls/current")).header(reqwest::header::COOKIE, &cookie).send().await?;
        if resp.status().is_success() {
            break resp.json::<Value>().await?;
        }
        tokio::time::sleep(Duration::from_millis(500)).await;
    };
    println!("open poll before voting: {poll}");
    let id = poll["id"].as_str().ok_or("poll id")?;
    let vote: Value = client
        .post(format!("{base}/api/polls/{id}/vote"))
        .header(reqwest::header::COOKIE, &cookie)
        .json(&json!({"choice": "a"}))
        .send()
        .await?
        .json()
        .await?;
    println!("after voting: {vote}");
    let stats: Value = client.get(format!("{base}/api/stats?tileset=dungeon")).send().await?.json().await?;
    println!("stats: {stats}");
    server.http.abort();
    server.ticker.abort();
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
