use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{GridHeader, Raster, RasterError, DEFAULT_NODATA};

#[derive(Default)]
struct HeaderFields {
    ncols: Option<(usize, usize)>,
    nrows: Option<(usize, usize)>,
    xll: Option<(f64, usize)>,
    yll: Option<(f64, usize)>,
    cellsize: Option<(f64, usize)>,
    nodata: Option<(f64, usize)>,
}

fn parse_err(line: usize, message: impl Into<String>) -> RasterError {
    RasterError::Parse {
        line,
        message: message.into(),
    }
}

fn set_once<T>(slot: &mut Option<(T, usize)>, value: T, key: &str, line: usize) -> Result<(), RasterError> {
    if slot.is_some() {
        return Err(parse_err(line, format!("duplicate header key `{key}`")));
    }
    *slot = Some((value, line));
    Ok(())
}

/// Parse an ESRI ASCII grid.
///
/// Header keys are case-insensitive and may appear in any order; every key
/// except `NODATA_value` is required. Data rows must carry exactly `ncols`
/// values each. Errors carry the 1-based line number of the offending line.
pub fn read_ascii_grid<R: Read>(mut reader: R) -> Result<Raster, RasterError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    parse(&text)
}

pub fn read_ascii_grid_file(path: impl AsRef<Path>) -> Result<Raster, RasterError> {
    read_ascii_grid(File::open(path)?)
}

fn parse(text: &str) -> Result<Raster, RasterError> {
    let mut fields = HeaderFields::default();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();

    // header: `key value` pairs until the first line that starts with a number
    let mut first_data_line = None;
    while let Some(&(n, raw)) = lines.peek() {
        let line = raw.trim();
        if line.is_empty() {
            lines.next();
            continue;
        }
        let mut tokens = line.split_whitespace();
        let key = tokens.next().unwrap_or_default();
        if key.parse::<f64>().is_ok() {
            first_data_line = Some(n);
            break;
        }
        let value = tokens
            .next()
            .ok_or_else(|| parse_err(n, format!("header key `{key}` has no value")))?;
        if tokens.next().is_some() {
            return Err(parse_err(n, format!("header line for `{key}` has extra tokens")));
        }
        let int = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| parse_err(n, format!("`{key}` must be a positive integer, got `{v}`")))
        };
        let real = |v: &str| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(n, format!("`{key}` must be a finite number, got `{v}`")))
        };
        match key.to_ascii_lowercase().as_str() {
            "ncols" => set_once(&mut fields.ncols, int(value)?, key, n)?,
            "nrows" => set_once(&mut fields.nrows, int(value)?, key, n)?,
            "xllcorner" => set_once(&mut fields.xll, real(value)?, key, n)?,
            "yllcorner" => set_once(&mut fields.yll, real(value)?, key, n)?,
            "cellsize" => set_once(&mut fields.cellsize, real(value)?, key, n)?,
            "nodata_value" => set_once(&mut fields.nodata, real(value)?, key, n)?,
            "xllcenter" | "yllcenter" => {
                return Err(parse_err(
                    n,
                    format!("`{key}`: center-registered grids are not supported, use xllcorner/yllcorner"),
                ))
            }
            _ => return Err(parse_err(n, format!("unknown header key `{key}`"))),
        }
        lines.next();
    }

    let eof_line = text.lines().count() + 1;
    let at = first_data_line.unwrap_or(eof_line);
    let missing = |k: &str| parse_err(at, format!("missing header key `{k}`"));
    let (ncols, ncols_line) = fields.ncols.ok_or_else(|| missing("ncols"))?;
    let (nrows, nrows_line) = fields.nrows.ok_or_else(|| missing("nrows"))?;
    let (xll, xll_line) = fields.xll.ok_or_else(|| missing("xllcorner"))?;
    let (yll, yll_line) = fields.yll.ok_or_else(|| missing("yllcorner"))?;
    let (cellsize, cs_line) = fields.cellsize.ok_or_else(|| missing("cellsize"))?;
    let nodata = fields.nodata.map(|(v, _)| v).unwrap_or(DEFAULT_NODATA);

    let header = GridHeader::new(ncols, nrows, xll, yll, cellsize, nodata).map_err(|e| {
        let line = match &e {
            RasterError::Header(m) if m.starts_with("ncols") => ncols_line.min(nrows_line),
            RasterError::Header(m) if m.starts_with("cellsize") => cs_line,
            RasterError::Header(m) if m.starts_with("xll") || m.contains("180E") => xll_line,
            RasterError::Header(m) if m.starts_with("yll") || m.contains("90N") => yll_line,
            _ => fields.nodata.map(|(_, l)| l).unwrap_or(cs_line),
        };
        parse_err(line, e.to_string())
    })?;

    let mut values = Vec::with_capacity(header.len());
    let mut rows_read = 0;
    for (n, raw) in lines {
        if raw.trim().is_empty() {
            continue;
        }
        if rows_read == nrows {
            return Err(parse_err(n, format!("extra data row, header declares nrows={nrows}")));
        }
        let before = values.len();
        for (col, tok) in raw.split_whitespace().enumerate() {
            let v: f64 = tok.parse().map_err(|_| {
                parse_err(n, format!("column {}: `{tok}` is not a number", col + 1))
            })?;
            if !v.is_finite() && v != nodata {
                return Err(parse_err(n, format!("column {}: non-finite value `{tok}`", col + 1)));
            }
            values.push(v);
        }
        let got = values.len() - before;
        if got != ncols {
            return Err(parse_err(n, format!("expected {ncols} values, found {got}")));
        }
        rows_read += 1;
    }
    if rows_read != nrows {
        return Err(parse_err(
            eof_line,
            format!("expected {nrows} data rows, found {rows_read}"),
        ));
    }
    Raster::new(header, values)
}

/// Write `r` as an ESRI ASCII grid.
///
/// Values use the shortest decimal representation that parses back to the
/// same `f64`, so reading the output reproduces `r` exactly.
pub fn write_ascii_grid<W: Write>(r: &Raster, mut w: W) -> std::io::Result<()> {
    let h = r.header();
    writeln!(w, "ncols {}", h.ncols())?;
    writeln!(w, "nrows {}", h.nrows())?;
    writeln!(w, "xllcorner {}", h.xll())?;
    writeln!(w, "yllcorner {}", h.yll())?;
    writeln!(w, "cellsize {}", h.cellsize())?;
    writeln!(w, "NODATA_value {}", h.nodata())?;
    for row in r.values().chunks(h.ncols()) {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b" ")?;
            }
            write!(w, "{v}")?;
            first = false;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_ascii_grid_file(r: &Raster, path: impl AsRef<Path>) -> std::io::Result<()> {
    write_ascii_grid(r, BufWriter::new(File::create(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn to_text(r: &Raster) -> String {
        let mut buf = Vec::new();
        write_ascii_grid(r, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn minimal_grid() {
        let r = parse("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n5.0\n").unwrap();
        assert_eq!(r.values(), &[5.0]);
        assert_eq!(r.nodata(), -9999.0);
        let again = parse(&to_text(&r)).unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn keys_are_case_insensitive() {
        let r = parse("NCOLS 2\nNRows 1\nXLLCORNER -1.5\nyllCorner 10\nCELLSIZE 0.5\nnodata_value -1\n1 -1\n")
            .unwrap();
        assert_eq!(r.header().xll(), -1.5);
        assert_eq!(r.get(0, 1), None);
    }

    #[test]
    fn wrong_row_width_names_the_line() {
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 4 5\n";
        match parse(text) {
            Err(RasterError::Parse { line, message }) => {
                assert_eq!(line, 7);
                assert!(message.contains("expected 2 values, found 3"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        let head = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n";
        let err_line = |t: &str| match parse(t) {
            Err(RasterError::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(err_line(&format!("{head}1 x\n3 4\n")), 6);
        assert_eq!(err_line(&format!("{head}1 2\n")), 7);
        assert_eq!(err_line(&format!("{head}1 2\n3 4\n5 6\n")), 8);
        assert_eq!(err_line("ncols 2\nwidth 3\n"), 2);
        assert_eq!(err_line("ncols 2\nncols 3\n"), 2);
        assert_eq!(err_line("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 0\n1\n"), 5);
        assert_eq!(err_line("ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\n1\n"), 5);
        assert_eq!(err_line("ncols 1\nnrows 1\nxllcenter 0\nyllcorner 0\ncellsize 1\n1\n"), 3);
        assert_eq!(err_line(&format!("{head}1 nan\n3 4\n")), 6);
    }

    #[test]
    fn all_nodata_grid() {
        let h = GridHeader::new(2, 2, 0.0, 0.0, 1.0, -9999.0).unwrap();
        let r = Raster::filled(h, -9999.0);
        let text = to_text(&r);
        assert_eq!(text.matches("-9999").count(), 4 + 1); // plus the header line
        assert_eq!(parse(&text).unwrap(), r);
    }

    #[test]
    fn shortest_round_trip_decimal() {
        let h = GridHeader::new(1, 1, 0.0, 0.0, 1.0, -9999.0).unwrap();
        let r = Raster::new(h, vec![0.1]).unwrap();
        let text = to_text(&r);
        assert!(text.ends_with("\n0.1\n"), "{text}");
        assert_eq!(parse(&text).unwrap().values()[0], 0.1);
    }

    fn arb_raster() -> impl Strategy<Value = Raster> {
        (1usize..=64, 1usize..=64, -180.0f64..170.0, -90.0f64..80.0, 1e-4f64..0.15)
            .prop_flat_map(|(nc, nr, x, y, cs)| {
                let vals = prop::collection::vec(
                    prop_oneof![9 => -1e6f64..1e6, 1 => Just(-9999.0)],
                    nc * nr,
                );
                (Just((nc, nr, x, y, cs)), vals)
            })
            .prop_map(|((nc, nr, x, y, cs), vals)| {
                let h = GridHeader::new(nc, nr, x, y, cs, -9999.0).unwrap();
                Raster::new(h, vals).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn round_trip(r in arb_raster()) {
            let back = parse(&to_text(&r)).unwrap();
            prop_assert_eq!(back.header(), r.header());
            let same = back.values().iter().zip(r.values()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }

        #[test]
        fn rejects_mutated_headers(
            which in 0usize..5,
            bad in prop_oneof![Just(0.0f64), Just(-1.0), Just(200.0), Just(-200.0)],
        ) {
            let mut keys = [
                ("ncols", "2".to_string()),
                ("nrows", "2".to_string()),
                ("xllcorner", "10".to_string()),
                ("yllcorner", "10".to_string()),
                ("cellsize", "1".to_string()),
            ];
            keys[which].1 = bad.to_string();
            let nc: usize = keys[0].1.parse().unwrap_or(0);
            let nr: usize = keys[1].1.parse().unwrap_or(0);
            let row = vec!["1"; nc].join(" ");
            let data: String = (0..nr).map(|_| format!("{row}\n")).collect();
            let text: String = keys.iter().map(|(k, v)| format!("{k} {v}\n")).collect::<String>() + &data;
            let h = GridHeader::new(
                nc,
                nr,
                keys[2].1.parse().unwrap(),
                keys[3].1.parse().unwrap(),
                keys[4].1.parse().unwrap(),
                -9999.0,
            );
            prop_assert_eq!(parse(&text).is_ok(), h.is_ok());
            if which == 4 {
                prop_assert!(parse(&text).is_err());
            }
        }
    }
}
