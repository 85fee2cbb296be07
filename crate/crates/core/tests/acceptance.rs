//! Full acceptance run: every criterion at its pinned scale and tolerance,
//! one PASS/FAIL line each.

use std::io::Write;
use std::time::Instant;

use spikedcorr::suite::{run_criteria, Scale, CRITERIA};

fn say(line: &str) {
    // Written to the raw handle so the lines survive output capture.
    let mut out = std::io::stdout();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    // 4 and 6 share one simulation; run_criteria caches it only within a call.
    let groups: Vec<Vec<u8>> = vec![vec![1], vec![2], vec![3], vec![4, 6], vec![5], vec![7], vec![8], vec![9], vec![10]];
    let mut lines = Vec::new();
    for ids in groups {
        let t = Instant::now();
        match run_criteria(&ids, Scale::PaperDesk, None) {
            Ok(results) => {
                let secs = t.elapsed().as_secs_f64();
                for r in results {
                    if !r.passed {
                        failed.push(r.id);
                    }
                    let line = format!("{}  [{secs:.1}s]", r.line());
                    say(&line);
                    lines.push((r.id, line));
                }
            }
            Err(e) => {
                for id in ids {
                    let name = CRITERIA.iter().find(|c| c.0 == id).map_or("", |c| c.1);
                    let line = format!("[FAIL] criterion {id:>2}: {name} | error: {e}");
                    say(&line);
                    lines.push((id, line));
                    failed.push(id);
                }
            }
        }
    }
    lines.sort_by_key(|l| l.0);
    say("acceptance summary:");
    for (_, l) in &lines {
        say(l);
    }
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
