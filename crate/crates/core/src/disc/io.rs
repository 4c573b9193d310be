//! Field export: CSV `t,x,value` and a row-major binary dump with a
//! 16-byte header (`DGC1`, `N`, `M`, kind code; all little-endian `u32`).
//! Both include the boundary nodes.

use std::io::{self, Read, Write};

use crate::disc::{FieldKind, Grid, StateField};

pub const MAGIC: &[u8; 4] = b"DGC1";

fn with_boundary(field: &StateField, n: usize) -> impl Iterator<Item = f64> + '_ {
    let s = field.slice(n);
    std::iter::once(0.0).chain(s.iter().copied()).chain(std::iter::once(0.0))
}

pub fn write_csv<W: Write>(field: &StateField, mut w: W) -> io::Result<()> {
    writeln!(w, "t,x,value")?;
    let g = field.grid;
    for n in 0..=g.m {
        let t = g.t(n);
        for (i, v) in with_boundary(field, n).enumerate() {
            writeln!(w, "{},{},{}", t, g.node(i), v)?;
        }
    }
    Ok(())
}

pub fn write_binary<W: Write>(field: &StateField, mut w: W) -> io::Result<()> {
    let g = field.grid;
    let to_u32 = |v: usize| {
        u32::try_from(v).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "grid too large"))
    };
    w.write_all(MAGIC)?;
    w.write_all(&to_u32(g.n)?.to_le_bytes())?;
    w.write_all(&to_u32(g.m)?.to_le_bytes())?;
    w.write_all(&field.kind.code().to_le_bytes())?;
    for n in 0..=g.m {
        for v in with_boundary(field, n) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a binary dump back. The horizon is not stored and must be given.
pub fn read_binary<R: Read>(mut r: R, horizon: f64) -> io::Result<StateField> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let word = |k: usize| u32::from_le_bytes(head[k..k + 4].try_into().unwrap()) as usize;
    let (n, m) = (word(4), word(8));
    let kind = FieldKind::from_code(word(12) as u32).ok_or_else(|| bad("unknown field kind"))?;
    let grid = Grid::new(n, m, horizon).map_err(|e| bad(&e.to_string()))?;
    let mut data = Vec::with_capacity((m + 1) * n);
    let mut buf = [0u8; 8];
    for _ in 0..=m {
        for i in 0..n + 2 {
            r.read_exact(&mut buf)?;
            if i != 0 && i != n + 1 {
                data.push(f64::from_le_bytes(buf));
            }
        }
    }
    StateField::from_data(grid, kind, data).map_err(|e| bad(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_layout() {
        let g = Grid::new(8, 8, 0.5).unwrap();
        let f = StateField::from_fn(g, FieldKind::Control, |x, t| x * t + 0.1);
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 9 * 10 * 8);
        assert_eq!(&buf[..4], b"DGC1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        let back = read_binary(&buf[..], 0.5).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn csv_has_boundary_rows() {
        let g = Grid::new(8, 8, 1.0).unwrap();
        let f = StateField::zeros(g, FieldKind::State);
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 9 * 10);
        assert_eq!(text.lines().nth(1).unwrap(), "0,0,0");
    }
}
