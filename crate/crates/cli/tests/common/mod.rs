#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

use wordshap::audio::load_wav;
use wordshap::protocol::{decode_request_audio, EvaluateRequest, Handshake, Response, PROTOCOL_NAME};
use wordshap::Segmentation;

pub fn wordshap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wordshap"))
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("run wordshap")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A generated corpus under `root`.
pub struct Corpus {
    pub root: PathBuf,
}

impl Corpus {
    pub fn synth(root: &Path, samples: usize, min_words: usize, max_words: usize, seed: u64) -> Self {
        let out = wordshap(&[
            "synth",
            "--out",
            p(root),
            "--samples",
            &samples.to_string(),
            "--min-words",
            &min_words.to_string(),
            "--max-words",
            &max_words.to_string(),
            "--seed",
            &seed.to_string(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        Self { root: root.to_path_buf() }
    }

    pub fn audio(&self) -> PathBuf {
        self.root.join("audio")
    }

    pub fn emissions(&self) -> PathBuf {
        self.root.join("emissions")
    }

    pub fn transcripts(&self) -> PathBuf {
        self.root.join("transcripts.tsv")
    }

    pub fn segments(&self) -> PathBuf {
        self.root.join("segments")
    }

    pub fn segment(&self, extra: &[&str]) -> Output {
        let (audio, transcripts, emissions, segments) =
            (self.audio(), self.transcripts(), self.emissions(), self.segments());
        let mut args = vec![
            "segment",
            "--audio-dir",
            p(&audio),
            "--transcripts",
            p(&transcripts),
            "--emissions-dir",
            p(&emissions),
            "--segments-dir",
            p(&segments),
        ];
        args.extend(extra);
        wordshap(&args)
    }

    pub fn attribute(&self, results: &Path, extra: &[&str]) -> Output {
        let segments = self.segments();
        let audio = self.audio();
        let mut args = vec![
            "attribute",
            "--segments-dir",
            p(&segments),
            "--audio-dir",
            p(&audio),
            "--results-dir",
            p(results),
        ];
        args.extend(extra);
        wordshap(&args)
    }
}

/// Counts of what an in-test evaluator server has seen.
#[derive(Default)]
pub struct ServerStats {
    pub requests: AtomicU64,
    pub handshakes: AtomicU64,
    pub mismatches: AtomicU64,
}

impl ServerStats {
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn handshakes(&self) -> u64 {
        self.handshakes.load(Ordering::SeqCst)
    }

    pub fn mismatches(&self) -> u64 {
        self.mismatches.load(Ordering::SeqCst)
    }
}

/// Sample-index ranges of every segmented sample, keyed by audio length.
fn span_table(segments: &Path, audio: &Path) -> HashMap<usize, Vec<(usize, usize)>> {
    let mut table = HashMap::new();
    for entry in std::fs::read_dir(segments).unwrap() {
        let path = entry.unwrap().path();
        let id = path.file_stem().unwrap().to_str().unwrap().to_string();
        let seg = Segmentation::load(&path).unwrap();
        let wav = load_wav(audio.join(format!("{id}.wav"))).unwrap();
        let sr = wav.sample_rate() as f64;
        let ranges = seg
            .words()
            .iter()
            .map(|w| ((w.span.start_s() * sr).floor() as usize, (w.span.end_s() * sr).floor() as usize))
            .collect();
        assert!(table.insert(wav.len(), ranges).is_none(), "two samples share a length");
    }
    table
}

/// Serves `v = sum of (i + 1)` over the players whose span still carries
/// sound in the decoded WAV. A request whose audible set disagrees with its
/// declared coalition gets an error response.
pub fn additive_server(segments: &Path, audio: &Path) -> (String, Arc<ServerStats>) {
    let table = Arc::new(span_table(segments, audio));
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let stats = Arc::new(ServerStats::default());
    let shared = Arc::clone(&stats);
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { break };
            let table = Arc::clone(&table);
            let stats = Arc::clone(&shared);
            thread::spawn(move || {
                stream.set_nodelay(true).unwrap();
                let mut writer = stream.try_clone().unwrap();
                let hs = Handshake {
                    protocol: PROTOCOL_NAME.into(),
                    deterministic: true,
                };
                writeln!(writer, "{}", serde_json::to_string(&hs).unwrap()).unwrap();
                stats.handshakes.fetch_add(1, Ordering::SeqCst);
                for line in BufReader::new(stream).lines() {
                    let Ok(line) = line else { break };
                    let req: EvaluateRequest = serde_json::from_str(&line).unwrap();
                    stats.requests.fetch_add(1, Ordering::SeqCst);
                    let resp = answer(&table, &req, &stats);
                    let reply = serde_json::to_string(&resp).unwrap() + "\n";
                    if writer.write_all(reply.as_bytes()).is_err() {
                        break;
                    }
                }
            });
        }
    });
    (addr, stats)
}

fn answer(table: &HashMap<usize, Vec<(usize, usize)>>, req: &EvaluateRequest, stats: &ServerStats) -> Response {
    let fail = |msg: String| Response {
        id: req.id,
        value: None,
        error: Some(msg),
    };
    let wav = match decode_request_audio(req) {
        Ok(w) => w,
        Err(e) => return fail(e.to_string()),
    };
    let Some(ranges) = table.get(&wav.len()) else {
        return fail(format!("unknown audio of {} samples", wav.len()));
    };
    let mut audible = 0u64;
    let mut value = 0.0;
    for (i, &(a, b)) in ranges.iter().enumerate() {
        if wav.samples()[a..b.min(wav.len())].iter().any(|&x| x != 0.0) {
            audible |= 1 << i;
            value += (i + 1) as f64;
        }
    }
    if audible != req.meta.coalition {
        stats.mismatches.fetch_add(1, Ordering::SeqCst);
        return fail(format!("audible {audible:b} but coalition {:b}", req.meta.coalition));
    }
    Response {
        id: req.id,
        value: Some(value),
        error: None,
    }
}
