//! Line-oriented child processes.
//!
//! A [`LineProcess`] owns a child started through `sh -c`. Request lines are
//! written from a separate thread so a slow reader cannot deadlock the
//! writer; stdout lines arrive on a channel so every read can carry a timeout.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::Duration;

use crate::error::{Error, Result};

pub enum LineEvent {
    Line(String),
    Eof,
}

pub struct LineProcess {
    command: String,
    child: Child,
    lines: Receiver<std::io::Result<String>>,
    writer: Option<JoinHandle<()>>,
    stderr: Option<JoinHandle<String>>,
}

impl LineProcess {
    /// Spawn `command` and feed it `input` (already newline-terminated lines),
    /// closing its stdin afterwards.
    pub fn spawn(command: &str, input: String) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Adapter(format!("cannot spawn {command:?}: {e}")))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || {
            // A dead adapter shows up as EPIPE here; the reader side reports it.
            let _ = stdin.write_all(input.as_bytes());
            let _ = stdin.flush();
        });

        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });

        let mut stderr_pipe = child.stderr.take().expect("piped stderr");
        let stderr = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr_pipe.read_to_string(&mut buf);
            buf
        });

        Ok(Self {
            command: command.to_string(),
            child,
            lines: rx,
            writer: Some(writer),
            stderr: Some(stderr),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn next_line(&mut self, timeout: Duration) -> Result<LineEvent> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(LineEvent::Line(line)),
            Ok(Err(e)) => {
                self.kill();
                Err(Error::Protocol(format!("unreadable adapter output: {e}")))
            }
            Err(RecvTimeoutError::Disconnected) => Ok(LineEvent::Eof),
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                Err(Error::Adapter(format!(
                    "timed out after {}s waiting for {:?}",
                    timeout.as_secs_f64(),
                    self.command
                )))
            }
        }
    }

    pub fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    /// Wait for exit after stdout closed; returns the status and the tail of stderr.
    pub fn finish(mut self) -> Result<(ExitStatus, String)> {
        let status = self
            .child
            .wait()
            .map_err(|e| Error::Adapter(format!("{:?}: {e}", self.command)))?;
        if let Some(w) = self.writer.take() {
            let _ = w.join();
        }
        let stderr = self.stderr.take().and_then(|h| h.join().ok()).unwrap_or_default();
        Ok((status, last_line(&stderr)))
    }
}

impl Drop for LineProcess {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            self.kill();
        }
    }
}

fn last_line(s: &str) -> String {
    s.lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .unwrap_or("")
        .trim()
        .to_string()
}

/// Human-readable exit description including the last stderr line, if any.
pub fn describe_exit(status: ExitStatus, stderr_tail: &str) -> String {
    if stderr_tail.is_empty() {
        format!("adapter exited with {status}")
    } else {
        format!("adapter exited with {status} ({stderr_tail})")
    }
}
