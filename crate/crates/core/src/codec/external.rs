//! Adapter for an external compressor: raw bytes on stdin, compressed bytes
//! on stdout, exit status 0.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;

use super::CodeLength;
use crate::error::{Error, Result};

/// Run `command` through `sh -c`, feed it `data` and count its output bytes.
pub fn external_size(data: &[u8], command: &str) -> Result<CodeLength> {
    if command.trim().is_empty() {
        return Err(Error::InvalidSpec("external command is empty".into()));
    }
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| Error::CodecUnavailable(format!("{command}: {e}")))?;

    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = data.to_vec();
    // The writer runs on its own thread so a program that streams output
    // before consuming all input cannot deadlock us.
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(&input);
    });

    let mut produced = 0u64;
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = stdout
            .read(&mut buf)
            .map_err(|e| Error::CodecUnavailable(format!("{command}: {e}")))?;
        if n == 0 {
            break;
        }
        produced += n as u64;
    }
    let _ = writer.join();
    let status = child
        .wait()
        .map_err(|e| Error::CodecUnavailable(format!("{command}: {e}")))?;
    if !status.success() {
        return Err(Error::CodecUnavailable(format!("{command}: exited with {status}")));
    }
    Ok(CodeLength::from_bytes(produced))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cat_reports_input_length() {
        let c = external_size(b"hello world", "cat").unwrap();
        assert_eq!(c.bytes, 11);
        assert_eq!(c.bits, 88.0);
    }

    #[test]
    fn gzip_shrinks_repetitive_input() {
        let data = b"abcabcabc".repeat(1000);
        match external_size(&data, "gzip -9 -c") {
            Ok(c) => assert!(c.bytes < 200),
            Err(Error::CodecUnavailable(_)) => {} // gzip missing on this host
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn failing_command_is_unavailable() {
        let err = external_size(b"x", "exit 7").unwrap_err();
        assert!(matches!(err, Error::CodecUnavailable(_)));
        let err = external_size(b"x", "definitely-not-a-real-program-xyz").unwrap_err();
        assert!(matches!(err, Error::CodecUnavailable(_)));
        assert_eq!(err.exit_code(), 3);
    }
}
