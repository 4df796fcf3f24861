//! CSV and JSON artifacts: path files, state files with sidecars, Φ table
//! caches and profile files. Floats are written with 17 significant digits.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{PathKind, SamplePath};
use crate::phi::OscillatoryTable;
use crate::spectral::{ModeBox, SpectralState, MAX_DIM};

/// Largest number of coefficients or table entries a file may describe.
pub const MAX_ENTRIES: usize = 1 << 26;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(format!("{what}: cannot parse {field:?} as a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(format!("{what}: non-finite value {field:?}")));
    }
    Ok(v)
}

fn parse_int(field: &str, what: &str) -> Result<i64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(format!("{what}: cannot parse {field:?} as an integer")))
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[String]) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != expected {
        return Err(Error::parse(format!("expected header {:?}, got {:?}", expected.join(","), got.join(","))));
    }
    Ok(())
}

fn owned(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn write_path_csv<W: Write>(path: &SamplePath, mut w: W) -> Result<()> {
    writeln!(w, "t,w")?;
    for (t, v) in path.t_grid().iter().zip(path.raw_values()) {
        writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(v))?;
    }
    Ok(())
}

/// Reads a `t,w` file into an external path.
pub fn read_path_csv<R: Read>(r: R) -> Result<SamplePath> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &owned(&["t", "w"]))?;
    let (mut ts, mut ws) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::parse(format!("row {}: expected 2 fields", i + 1)));
        }
        ts.push(parse_f64(&rec[0], "t")?);
        ws.push(parse_f64(&rec[1], "w")?);
        if ts.len() > MAX_ENTRIES {
            return Err(Error::parse("path file too long"));
        }
    }
    SamplePath::new(ts, ws, PathKind::External).map_err(|e| Error::parse(e.to_string()))
}

/// JSON sidecar of a state file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateMeta {
    pub d: usize,
    #[serde(rename = "N")]
    pub n_max: usize,
}

impl StateMeta {
    pub fn from_json(s: &str) -> Result<Self> {
        let meta: StateMeta = serde_json::from_str(s)?;
        if !(1..=MAX_DIM).contains(&meta.d) {
            return Err(Error::parse(format!("d={} outside 1..={MAX_DIM}", meta.d)));
        }
        let len = (2 * meta.n_max as u128 + 1).checked_pow(meta.d as u32);
        if len.map_or(true, |l| l > MAX_ENTRIES as u128) {
            return Err(Error::parse(format!("box (d={}, N={}) is too large", meta.d, meta.n_max)));
        }
        Ok(meta)
    }
}

fn state_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=d).map(|i| format!("n_{i}")).collect();
    h.push("re".into());
    h.push("im".into());
    h
}

/// Writes nonzero coefficients as `n_1,…,n_d,re,im` rows.
pub fn write_state_csv<W: Write>(state: &SpectralState, mut w: W) -> Result<()> {
    writeln!(w, "{}", state_header(state.d()).join(","))?;
    let bx = state.mode_box();
    for (i, c) in state.coeffs().iter().enumerate() {
        if *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let mode: Vec<String> = bx.mode(i).iter().map(|x| x.to_string()).collect();
        writeln!(w, "{},{},{}", mode.join(","), fmt_f64(c.re), fmt_f64(c.im))?;
    }
    Ok(())
}

pub fn write_state_meta<W: Write>(state: &SpectralState, w: W) -> Result<()> {
    serde_json::to_writer(w, &StateMeta { d: state.d(), n_max: state.n_max() })?;
    Ok(())
}

/// Parses a state file against its sidecar; modes outside the box and
/// repeated modes are rejected.
pub fn read_state_csv<R: Read>(r: R, meta: StateMeta) -> Result<SpectralState> {
    let bx = ModeBox::new(meta.d, meta.n_max);
    let mut state = SpectralState::zeros(meta.d, meta.n_max);
    let mut rdr = reader(r);
    check_header(&mut rdr, &state_header(meta.d))?;
    let mut seen = HashSet::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != meta.d + 2 {
            return Err(Error::parse(format!("row {}: expected {} fields", row + 1, meta.d + 2)));
        }
        let mode = (0..meta.d).map(|i| parse_int(&rec[i], "mode")).collect::<Result<Vec<i64>>>()?;
        let idx = bx
            .index(&mode)
            .ok_or_else(|| Error::parse(format!("row {}: mode {mode:?} outside [-N, N]^d", row + 1)))?;
        if !seen.insert(idx) {
            return Err(Error::parse(format!("row {}: mode {mode:?} repeated", row + 1)));
        }
        let re = parse_f64(&rec[meta.d], "re")?;
        let im = parse_f64(&rec[meta.d + 1], "im")?;
        state.coeffs_mut()[idx] = Complex64::new(re, im);
    }
    Ok(state)
}

/// `foo.csv` ↦ `foo.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn save_state(state: &SpectralState, csv_path: &Path) -> Result<()> {
    write_state_csv(state, std::io::BufWriter::new(std::fs::File::create(csv_path)?))?;
    write_state_meta(state, std::fs::File::create(sidecar_path(csv_path))?)
}

pub fn load_state(csv_path: &Path) -> Result<SpectralState> {
    let meta = StateMeta::from_json(&std::fs::read_to_string(sidecar_path(csv_path))?)?;
    read_state_csv(std::fs::File::open(csv_path)?, meta)
}

pub fn write_table_csv<W: Write>(table: &OscillatoryTable, mut w: W) -> Result<()> {
    writeln!(w, "t_index,mu,re,im")?;
    let mu_max = table.mu_max() as i64;
    for i in 0..table.t_grid().len() {
        for mu in -mu_max..=mu_max {
            let v = table.get(i, mu);
            writeln!(w, "{i},{mu},{},{}", fmt_f64(v.re), fmt_f64(v.im))?;
        }
    }
    Ok(())
}

/// Reads a table cache for the given time grid. Every `(t_index, mu)` with
/// `|mu| <= mu_max` must appear exactly once, `mu_max` being the largest
/// `|mu|` in the file.
pub fn read_table_csv<R: Read>(r: R, t_grid: &[f64]) -> Result<OscillatoryTable> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &owned(&["t_index", "mu", "re", "im"]))?;
    let mut rows = Vec::new();
    let mut mu_max = 0u64;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 4 {
            return Err(Error::parse(format!("row {}: expected 4 fields", row + 1)));
        }
        let i = parse_int(&rec[0], "t_index")?;
        if i < 0 || i as usize >= t_grid.len() {
            return Err(Error::parse(format!("row {}: t_index {i} outside the grid", row + 1)));
        }
        let mu = parse_int(&rec[1], "mu")?;
        mu_max = mu_max.max(mu.unsigned_abs());
        rows.push((i as usize, mu, Complex64::new(parse_f64(&rec[2], "re")?, parse_f64(&rec[3], "im")?)));
        if rows.len() > MAX_ENTRIES {
            return Err(Error::parse("table file too long"));
        }
    }
    let width = 2 * mu_max as usize + 1;
    if rows.len() != width * t_grid.len() {
        return Err(Error::parse(format!(
            "expected {} rows for mu_max={mu_max} and {} times, got {}",
            width * t_grid.len(),
            t_grid.len(),
            rows.len()
        )));
    }
    let mut values = vec![Complex64::new(0.0, 0.0); rows.len()];
    let mut filled = vec![false; rows.len()];
    for (i, mu, v) in rows {
        let at = i * width + (mu + mu_max as i64) as usize;
        if std::mem::replace(&mut filled[at], true) {
            return Err(Error::parse(format!("entry (t_index={i}, mu={mu}) repeated")));
        }
        values[at] = v;
    }
    OscillatoryTable::from_parts(mu_max as usize, t_grid.to_vec(), values).map_err(|e| Error::parse(e.to_string()))
}

/// One-column CSV with header `m`: a periodic profile sampled on `[0, 1)`.
pub fn read_profile_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &owned(&["m"]))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 1 {
            return Err(Error::parse("profile rows have exactly one field"));
        }
        out.push(parse_f64(&rec[0], "m")?);
        if out.len() > MAX_ENTRIES {
            return Err(Error::parse("profile file too long"));
        }
    }
    if out.is_empty() {
        return Err(Error::parse("profile has no samples"));
    }
    Ok(out)
}

pub fn write_profile_csv<W: Write>(profile: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "m")?;
    for m in profile {
        writeln!(w, "{}", fmt_f64(*m))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::make_fbm_path;
    use crate::phi::build_phi_table;
    use crate::spectral::random_state;

    #[test]
    fn path_round_trip() {
        let p = make_fbm_path(0.5, 1.0, 16, 3).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&p, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 18);
        let q = read_path_csv(buf.as_slice()).unwrap();
        assert_eq!(q.t_grid(), p.t_grid());
        assert_eq!(q.values(), p.values());
        assert_eq!(q.kind(), PathKind::External);
    }

    #[test]
    fn path_parse_errors() {
        assert!(read_path_csv("t,x\n0,0\n1,1\n".as_bytes()).is_err());
        assert!(read_path_csv("t,w\n0,0\n".as_bytes()).is_err());
        assert!(read_path_csv("t,w\n0,0\n1,nan\n".as_bytes()).is_err());
        assert!(read_path_csv("t,w\n0,0\n1\n".as_bytes()).is_err());
        assert!(read_path_csv("t,w\n0,0\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn state_round_trip() {
        let mut s = random_state(2, 3, 0.5, 1);
        s.set(&[1, -2], Complex64::new(0.0, 0.0)).unwrap();
        let mut buf = Vec::new();
        write_state_csv(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 49);
        let mut meta = Vec::new();
        write_state_meta(&s, &mut meta).unwrap();
        let meta = StateMeta::from_json(std::str::from_utf8(&meta).unwrap()).unwrap();
        assert_eq!(read_state_csv(buf.as_slice(), meta).unwrap(), s);
    }

    #[test]
    fn state_parse_errors() {
        let meta = StateMeta { d: 1, n_max: 2 };
        assert!(read_state_csv("n_1,re,im\n3,1,0\n".as_bytes(), meta).is_err());
        assert!(read_state_csv("n_1,re,im\n1,1,0\n1,2,0\n".as_bytes(), meta).is_err());
        assert!(read_state_csv("n_1,n_2,re,im\n".as_bytes(), meta).is_err());
        assert!(StateMeta::from_json(r#"{"d":9,"N":1}"#).is_err());
        assert!(StateMeta::from_json(r#"{"d":4,"N":100000}"#).is_err());
        let ok = read_state_csv("n_1,re,im\n-2,0.5,-1\n".as_bytes(), meta).unwrap();
        assert_eq!(ok.get(&[-2]).unwrap(), Complex64::new(0.5, -1.0));
    }

    #[test]
    fn table_round_trip() {
        let p = make_fbm_path(0.5, 1.0, 8, 2).unwrap();
        let grid = vec![0.0, 0.25, 1.0];
        let t = build_phi_table(&p, 3, &grid).unwrap();
        let mut buf = Vec::new();
        write_table_csv(&t, &mut buf).unwrap();
        assert_eq!(read_table_csv(buf.as_slice(), &grid).unwrap(), t);
        let text = String::from_utf8(buf).unwrap();
        let short: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(read_table_csv(short.as_bytes(), &grid).is_err());
    }

    #[test]
    fn profile_parse() {
        assert_eq!(read_profile_csv("m\n1\n-0.5\n".as_bytes()).unwrap(), vec![1.0, -0.5]);
        assert!(read_profile_csv("m\n".as_bytes()).is_err());
        assert!(read_profile_csv("x\n1\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_profile_csv(&[0.25, 3.0], &mut buf).unwrap();
        assert_eq!(read_profile_csv(buf.as_slice()).unwrap(), vec![0.25, 3.0]);
    }
}
