#![allow(dead_code)]

use std::net::SocketAddr;
use std::thread::JoinHandle;

use axum::Router;
use keyprint_registry::http::{bind, serve};
use keyprint_registry::{ChallengeSet, RegistryOptions};
use tokio::sync::oneshot;

/// Server on its own runtime thread so tests can use blocking clients.
pub struct TestServer {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl TestServer {
    pub fn start(router: Router) -> Self {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stop_rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
            rt.block_on(async move {
                let (listener, addr) = bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(addr).unwrap();
                serve(listener, router, async {
                    let _ = stop_rx.await;
                })
                .await
                .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self { addr, stop: Some(stop), thread: Some(thread) }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

pub fn numbered_dataset(n: usize) -> ChallengeSet {
    let text: String = (0..n).map(|i| format!("challenge item {i}\n")).collect();
    ChallengeSet::from_lines("numbered", &text, 39).unwrap()
}

pub fn fixed_options(dataset: ChallengeSet, entropy_byte: u8) -> RegistryOptions {
    RegistryOptions::new(dataset).with_entropy(std::io::repeat(entropy_byte)).with_clock(|| 1_750_000_000)
}

/// Deterministic but non-constant key material.
pub struct CountingEntropy(pub u64);

impl std::io::Read for CountingEntropy {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        for b in buf.iter_mut() {
            self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            *b = (z ^ (z >> 31)) as u8;
        }
        Ok(buf.len())
    }
}
