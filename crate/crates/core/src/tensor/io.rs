//! Named-tensor container: a text manifest followed by raw little-endian
//! `f32` values.
//!
//! ```text
//! TENSORS <count>
//! <name> <n> <c> <h> <w>
//! ...
//! END
//! <binary payload, tensors in manifest order>
//! ```
//!
//! Callers may put extra `key=value` header lines before `TENSORS`.

use std::io::{BufRead, Write};

use super::{Result, Shape, Tensor, TensorError};

pub fn write_tensors<W: Write>(out: &mut W, header: &[String], tensors: &[(&str, &Tensor<f32>)]) -> Result<()> {
    for line in header {
        if line.starts_with("TENSORS") || line.contains('\n') {
            return Err(TensorError::Format(format!("invalid header line {line:?}")));
        }
        writeln!(out, "{line}")?;
    }
    writeln!(out, "TENSORS {}", tensors.len())?;
    for (name, t) in tensors {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(TensorError::Format(format!("invalid tensor name {name:?}")));
        }
        let s = t.shape();
        writeln!(out, "{name} {} {} {} {}", s.n, s.c, s.h, s.w)?;
    }
    writeln!(out, "END")?;
    let mut buf = Vec::new();
    for (_, t) in tensors {
        buf.clear();
        buf.reserve(t.len() * 4);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Returns header lines and tensors in file order.
pub fn read_tensors<R: BufRead>(input: &mut R) -> Result<(Vec<String>, Vec<(String, Tensor<f32>)>)> {
    let mut header = Vec::new();
    let mut line = String::new();
    let count = loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(TensorError::Format("missing TENSORS line".into()));
        }
        let l = line.trim_end();
        if let Some(rest) = l.strip_prefix("TENSORS ") {
            break rest.trim().parse::<usize>().map_err(|_| TensorError::Format(format!("bad count {rest:?}")))?;
        }
        header.push(l.to_string());
    };
    let mut manifest = Vec::with_capacity(count);
    for _ in 0..count {
        line.clear();
        input.read_line(&mut line)?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(TensorError::Format(format!("bad manifest line {:?}", line.trim_end())));
        }
        let dims: Vec<usize> = parts[1..]
            .iter()
            .map(|p| p.parse().map_err(|_| TensorError::Format(format!("bad dimension {p:?}"))))
            .collect::<Result<_>>()?;
        manifest.push((parts[0].to_string(), Shape::new(dims[0], dims[1], dims[2], dims[3])));
    }
    line.clear();
    input.read_line(&mut line)?;
    if line.trim_end() != "END" {
        return Err(TensorError::Format(format!("expected END, found {:?}", line.trim_end())));
    }
    let mut tensors = Vec::with_capacity(count);
    for (name, shape) in manifest {
        let mut bytes = vec![0u8; shape.len() * 4];
        input
            .read_exact(&mut bytes)
            .map_err(|_| TensorError::Format(format!("payload truncated at {name}")))?;
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        tensors.push((name, Tensor::from_vec(shape, data)?));
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(TensorError::Format("trailing bytes after payload".into()));
    }
    Ok((header, tensors))
}
