use std::io::{self, BufRead, Write};

/// Writes a trace as `tick address` lines.
pub fn write_trace<W: Write>(mut out: W, trace: &[u64]) -> io::Result<()> {
    for (tick, addr) in trace.iter().enumerate() {
        writeln!(out, "{tick} {addr}")?;
    }
    Ok(())
}

/// Reads a `tick address` trace. Ticks must be strictly increasing; the
/// returned addresses are in tick order.
pub fn read_trace<R: BufRead>(input: R) -> io::Result<Vec<u64>> {
    let bad = |n: usize, msg: &str| io::Error::new(io::ErrorKind::InvalidData, format!("line {n}: {msg}"));
    let mut out = Vec::new();
    let mut last: Option<u64> = None;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tick: u64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(n + 1, "bad tick"))?;
        let addr: u64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(n + 1, "bad address"))?;
        if parts.next().is_some() {
            return Err(bad(n + 1, "trailing fields"));
        }
        if last.is_some_and(|l| tick <= l) {
            return Err(bad(n + 1, "ticks not increasing"));
        }
        last = Some(tick);
        out.push(addr);
    }
    Ok(out)
}
