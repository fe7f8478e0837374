//! Dataset text format, version 1.
//!
//! A dataset file is line-oriented UTF-8. The first line is a fixed header
//! naming the format and version. It is followed by `# key = value` metadata
//! lines (generation parameters, test-field parameters, per-size quartile
//! borders, record count), then one CSV record per stencil:
//!
//! ```text
//! s,x1,y1,...,xs,ys,epsilon,class
//! ```
//!
//! Coordinates are normalized (central node first at the origin, farthest
//! node at distance 1). Floats are written with 17 significant digits so a
//! write -> read -> write cycle is byte-identical. The reader rejects unknown
//! versions and unknown keys rather than guessing.

use crate::error::{Error, Result};
use crate::fields::TestField;
use crate::labeling::{Dataset, DatasetMeta, LabeledStencil, Quartile, QuartileBorders};
use crate::node_gen::{Point2, Rect, Stencil};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const DATASET_HEADER: &str = "# stencil-dataset v1";

/// 64-bit FNV-1a over a byte string. Used to fingerprint dataset files so a
/// checkpoint can tell whether an evaluation dataset is the one it was
/// trained on.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fingerprint of a file's raw bytes, as 16 lowercase hex digits.
pub fn file_fingerprint(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:016x}", fnv1a64(&bytes)))
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders a dataset in format v1. Every record must carry a quartile label.
pub fn dataset_to_string(dataset: &Dataset) -> String {
    let m = &dataset.meta;
    let mut out = String::new();
    writeln!(out, "{DATASET_HEADER}").unwrap();
    writeln!(out, "# seed = {}", m.seed).unwrap();
    writeln!(
        out,
        "# domain = {},{},{},{}",
        fmt_f(m.domain.min.x),
        fmt_f(m.domain.min.y),
        fmt_f(m.domain.max.x),
        fmt_f(m.domain.max.y)
    )
    .unwrap();
    writeln!(out, "# spacing-h = {}", fmt_f(m.spacing_h)).unwrap();
    let sizes: Vec<String> = m.sizes.iter().map(|s| s.to_string()).collect();
    writeln!(out, "# sizes = {}", sizes.join(",")).unwrap();
    writeln!(out, "# count-per-size = {}", m.count_per_size).unwrap();
    writeln!(out, "# pool-factor = {}", fmt_f(m.pool_factor)).unwrap();
    writeln!(out, "# decay-beta = {}", fmt_f(m.decay_beta)).unwrap();
    for field in &m.fields {
        match *field {
            TestField::Monomial { n, m } => {
                writeln!(out, "# field-monomial = {n},{m}").unwrap();
            }
            TestField::Sinusoidal { kx, ky } => {
                writeln!(out, "# field-sinusoidal = {},{}", fmt_f(kx), fmt_f(ky)).unwrap();
            }
            TestField::Exponential { sigma } => {
                writeln!(out, "# field-exponential = {}", fmt_f(sigma)).unwrap();
            }
        }
    }
    writeln!(out, "# epsilon-reduction = componentwise-abs-sum").unwrap();
    writeln!(out, "# padding = central-node").unwrap();
    writeln!(out, "# coords = normalized").unwrap();
    writeln!(out, "# max-size = {}", dataset.max_size).unwrap();
    for (s, cuts) in dataset.borders.iter() {
        writeln!(
            out,
            "# borders-{s} = {},{},{}",
            fmt_f(cuts[0]),
            fmt_f(cuts[1]),
            fmt_f(cuts[2])
        )
        .unwrap();
    }
    writeln!(out, "# records = {}", dataset.records.len()).unwrap();
    for r in &dataset.records {
        write!(out, "{}", r.size_s).unwrap();
        for p in r.stencil.coords() {
            write!(out, ",{},{}", fmt_f(p.x), fmt_f(p.y)).unwrap();
        }
        let class = r.quartile.expect("dataset record missing quartile label");
        writeln!(out, ",{},{}", fmt_f(r.epsilon), class.index() + 1).unwrap();
    }
    out
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_string(dataset)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    dataset_from_str(&text, path)
}

/// One `# key = value` line, with its 1-based line number for diagnostics.
struct HeaderEntry {
    line: usize,
    key: String,
    value: String,
}

fn take_key(header: &mut Vec<HeaderEntry>, origin: &Path, key: &str) -> Result<(usize, String)> {
    let pos = header
        .iter()
        .position(|e| e.key == key)
        .ok_or_else(|| Error::parse(origin, 1, format!("missing header key `{key}`")))?;
    let entry = header.remove(pos);
    if let Some(dup) = header.iter().find(|e| e.key == key) {
        return Err(Error::parse(
            origin,
            dup.line,
            format!("duplicate header key `{key}`"),
        ));
    }
    Ok((entry.line, entry.value))
}

fn scalar<T: std::str::FromStr>(origin: &Path, line: usize, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::parse(origin, line, format!("invalid {key}: `{v}`")))
}

fn float_list(origin: &Path, line: usize, key: &str, v: &str, n: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = v
        .split(',')
        .map(|t| scalar(origin, line, key, t))
        .collect::<Result<_>>()?;
    if vals.len() != n {
        return Err(Error::parse(
            origin,
            line,
            format!("{key} needs {n} comma-separated values, got {}", vals.len()),
        ));
    }
    Ok(vals)
}

fn expect_literal(origin: &Path, line: usize, key: &str, got: &str, want: &str) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::parse(
            origin,
            line,
            format!("unsupported {key} `{got}`, this build understands `{want}`"),
        ))
    }
}

/// Parses format v1. `origin` only labels error messages.
pub fn dataset_from_str(text: &str, origin: &Path) -> Result<Dataset> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.first() != Some(&DATASET_HEADER) {
        return Err(Error::parse(
            origin,
            1,
            format!("expected `{DATASET_HEADER}` on the first line"),
        ));
    }

    let mut header = Vec::new();
    let mut i = 1;
    while i < lines.len() && lines[i].starts_with('#') {
        let line = i + 1;
        let rest = lines[i].strip_prefix("# ").ok_or_else(|| {
            Error::parse(
                origin,
                line,
                "malformed header line, expected `# key = value`",
            )
        })?;
        let (key, value) = rest.split_once(" = ").ok_or_else(|| {
            Error::parse(
                origin,
                line,
                "malformed header line, expected `# key = value`",
            )
        })?;
        header.push(HeaderEntry {
            line,
            key: key.to_string(),
            value: value.to_string(),
        });
        i += 1;
    }

    let (ln, v) = take_key(&mut header, origin, "seed")?;
    let seed: u64 = scalar(origin, ln, "seed", &v)?;
    let (ln, v) = take_key(&mut header, origin, "domain")?;
    let d = float_list(origin, ln, "domain", &v, 4)?;
    let domain = Rect::new(Point2::new(d[0], d[1]), Point2::new(d[2], d[3]));
    let (ln, v) = take_key(&mut header, origin, "spacing-h")?;
    let spacing_h: f64 = scalar(origin, ln, "spacing-h", &v)?;
    if !(spacing_h.is_finite() && spacing_h > 0.0) {
        return Err(Error::parse(origin, ln, "spacing-h must be positive"));
    }

    let (ln, v) = take_key(&mut header, origin, "sizes")?;
    let sizes: Vec<usize> = v
        .split(',')
        .map(|t| scalar(origin, ln, "sizes", t))
        .collect::<Result<_>>()?;
    if sizes.is_empty() {
        return Err(Error::parse(origin, ln, "sizes must not be empty"));
    }

    let (ln, v) = take_key(&mut header, origin, "count-per-size")?;
    let count_per_size: usize = scalar(origin, ln, "count-per-size", &v)?;
    let (ln, v) = take_key(&mut header, origin, "pool-factor")?;
    let pool_factor: f64 = scalar(origin, ln, "pool-factor", &v)?;
    let (ln, v) = take_key(&mut header, origin, "decay-beta")?;
    let decay_beta: f64 = scalar(origin, ln, "decay-beta", &v)?;

    let (ln, v) = take_key(&mut header, origin, "field-monomial")?;
    let nm = float_list(origin, ln, "field-monomial", &v, 2)?;
    let monomial = TestField::Monomial {
        n: nm[0] as u32,
        m: nm[1] as u32,
    };
    let (ln, v) = take_key(&mut header, origin, "field-sinusoidal")?;
    let k = float_list(origin, ln, "field-sinusoidal", &v, 2)?;
    let sinusoidal = TestField::Sinusoidal { kx: k[0], ky: k[1] };
    let (ln, v) = take_key(&mut header, origin, "field-exponential")?;
    let sg = float_list(origin, ln, "field-exponential", &v, 1)?;
    let exponential = TestField::Exponential { sigma: sg[0] };

    let (ln, v) = take_key(&mut header, origin, "epsilon-reduction")?;
    expect_literal(origin, ln, "epsilon-reduction", &v, "componentwise-abs-sum")?;
    let (ln, v) = take_key(&mut header, origin, "padding")?;
    expect_literal(origin, ln, "padding", &v, "central-node")?;
    let (ln, v) = take_key(&mut header, origin, "coords")?;
    expect_literal(origin, ln, "coords", &v, "normalized")?;

    let (ln, v) = take_key(&mut header, origin, "max-size")?;
    let max_size: usize = scalar(origin, ln, "max-size", &v)?;
    if Some(&max_size) != sizes.iter().max() {
        return Err(Error::parse(
            origin,
            ln,
            "max-size does not match the largest declared size",
        ));
    }

    let mut borders = QuartileBorders::default();
    for &s in &sizes {
        let key = format!("borders-{s}");
        let (ln, v) = take_key(&mut header, origin, &key)?;
        let c = float_list(origin, ln, &key, &v, 3)?;
        if !(c[0] <= c[1] && c[1] <= c[2]) {
            return Err(Error::parse(origin, ln, format!("{key} must be ascending")));
        }
        borders.insert(s, [c[0], c[1], c[2]]);
    }

    let (ln, v) = take_key(&mut header, origin, "records")?;
    let declared: usize = scalar(origin, ln, "records", &v)?;

    if let Some(stray) = header.first() {
        return Err(Error::parse(
            origin,
            stray.line,
            format!("unknown header key `{}`", stray.key),
        ));
    }

    let mut records = Vec::with_capacity(declared);
    for _ in 0..declared {
        if i >= lines.len() {
            return Err(Error::parse(
                origin,
                lines.len(),
                format!("expected {declared} records, found {}", records.len()),
            ));
        }
        let line = i + 1;
        records.push(parse_record(origin, line, lines[i], &sizes)?);
        i += 1;
    }
    if i < lines.len() {
        return Err(Error::parse(
            origin,
            i + 1,
            "trailing content after the declared records",
        ));
    }

    Ok(Dataset {
        records,
        max_size,
        borders,
        meta: DatasetMeta {
            seed,
            domain,
            spacing_h,
            sizes,
            count_per_size,
            pool_factor,
            decay_beta,
            fields: [monomial, sinusoidal, exponential],
        },
    })
}

fn parse_record(origin: &Path, line: usize, text: &str, sizes: &[usize]) -> Result<LabeledStencil> {
    let toks: Vec<&str> = text.split(',').collect();
    let size_s: usize = scalar(origin, line, "record size", toks[0])?;
    if !sizes.contains(&size_s) {
        return Err(Error::parse(
            origin,
            line,
            format!("record size {size_s} is not declared in the header"),
        ));
    }
    let expected = 2 * size_s + 3;
    if toks.len() != expected {
        return Err(Error::parse(
            origin,
            line,
            format!(
                "size-{size_s} record needs {expected} fields, got {}",
                toks.len()
            ),
        ));
    }
    let mut coords = Vec::with_capacity(size_s);
    for pair in toks[1..1 + 2 * size_s].chunks_exact(2) {
        coords.push(Point2::new(
            scalar(origin, line, "coordinate", pair[0])?,
            scalar(origin, line, "coordinate", pair[1])?,
        ));
    }
    let stencil = Stencil::new(coords)
        .map_err(|e| Error::parse(origin, line, format!("invalid stencil: {e}")))?;
    let epsilon: f64 = scalar(origin, line, "epsilon", toks[expected - 2])?;
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::parse(
            origin,
            line,
            "epsilon must be finite and non-negative",
        ));
    }
    let class: usize = scalar(origin, line, "class", toks[expected - 1])?;
    let quartile = if (1..=4).contains(&class) {
        Quartile::from_index(class - 1)
    } else {
        None
    }
    .ok_or_else(|| Error::parse(origin, line, format!("class must be 1..4, got {class}")))?;
    Ok(LabeledStencil {
        stencil,
        epsilon,
        size_s,
        quartile: Some(quartile),
    })
}
