//! Regenerate the synthetic fixtures under `fixtures/`.
//!
//! ```text
//! cargo run -p simseed-core --example make_fixtures -- fixtures
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simseed_core::calendar::YearMonth;
use simseed_core::numeric::round_to;
use simseed_core::raster_io::{write_ascii_grid_file, GridHeader, Raster, DEFAULT_NODATA};

const BRACKETS: [(&str, u32, u32, f64); 9] = [
    ("0-9", 0, 9, 0.16),
    ("10-19", 10, 19, 0.15),
    ("20-29", 20, 29, 0.15),
    ("30-39", 30, 39, 0.14),
    ("40-49", 40, 49, 0.13),
    ("50-59", 50, 59, 0.11),
    ("60-69", 60, 69, 0.08),
    ("70-79", 70, 79, 0.05),
    ("80+", 80, 99, 0.03),
];

fn write(r: &Raster, path: PathBuf) {
    write_ascii_grid_file(r, &path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
}

fn population(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    // 30 arc-second cells, like the 1 km products
    let h = GridHeader::new(120, 120, 19.5, 41.0, 1.0 / 120.0, DEFAULT_NODATA).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    let centers = [(41.33, 19.82, 380.0, 0.06), (41.62, 19.95, 150.0, 0.05), (41.15, 20.3, 90.0, 0.04)];
    let mut density = Vec::with_capacity(h.len());
    for row in 0..h.nrows() {
        for col in 0..h.ncols() {
            let (lat, lon) = h.cell_center(row, col).unwrap();
            // a lake in the south-west corner
            if lat < 41.08 && lon < 19.58 {
                density.push(DEFAULT_NODATA);
                continue;
            }
            let mut v = 0.4 * rng.random::<f64>();
            for (clat, clon, peak, sigma) in centers {
                let d2 = (lat - clat).powi(2) + (lon - clon).powi(2);
                v += peak * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            // empty uplands
            if lat > 41.85 && lon > 20.3 {
                v = 0.0;
            }
            density.push(round_to(v, 3));
        }
    }
    let density = Raster::new(h, density).unwrap();
    write(&density, dir.join("density.asc"));

    for (gender, share) in [("female", 0.505), ("male", 0.495)] {
        for (label, _, _, frac) in BRACKETS {
            let values = density
                .values()
                .iter()
                .map(|&v| {
                    if density.is_nodata(v) {
                        v
                    } else {
                        round_to(v * share * frac * rng.random_range(0.9..1.1), 3)
                    }
                })
                .collect();
            write(&Raster::new(h, values).unwrap(), dir.join(format!("{gender}_{label}.asc")));
        }
    }

    let mut toml = String::from(
        "# Synthetic 1°×1° country: one density grid and 18 age/gender grids\n\
         country = \"ALB\"\nyear = 2020\ngenders = [\"female\", \"male\"]\n\
         grid_pattern = \"{gender}_{bracket}.asc\"\ntotal = \"density.asc\"\n",
    );
    for (label, lo, hi, _) in BRACKETS {
        toml.push_str(&format!("\n[[brackets]]\nlabel = \"{label}\"\nmin_age = {lo}\nmax_age = {hi}\n"));
    }
    fs::write(dir.join("demographics.toml"), toml).unwrap();
}

fn climate(dir: &Path) {
    fs::create_dir_all(dir).unwrap();
    let h = GridHeader::new(10, 10, 2.0, 13.0, 0.1, DEFAULT_NODATA).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(56);
    let months = YearMonth::new(2020, 7).unwrap().through(YearMonth::new(2020, 9).unwrap());
    // (name, base, north-south gradient, east-west gradient, monthly shift, noise, decimals)
    let vars: [(&str, f64, f64, f64, f64, f64, u32); 6] = [
        ("tair", 301.5, -2.0, 0.8, -0.7, 0.3, 2),
        ("qair", 0.0155, 0.003, -0.001, 0.0006, 0.0004, 5),
        ("swnet", 205.0, 12.0, 6.0, -4.0, 5.0, 1),
        ("lwnet", -52.0, -6.0, 2.0, 3.0, 2.0, 1),
        ("wind", 2.8, -0.6, 0.4, -0.3, 0.3, 2),
        ("evap", 3.0e-5, 1.2e-5, -0.4e-5, 0.3e-5, 0.2e-5, 7),
    ];
    for (k, m) in months.iter().enumerate() {
        for (name, base, ns, ew, shift, noise, dec) in vars {
            let mut values = Vec::with_capacity(h.len());
            for row in 0..h.nrows() {
                for col in 0..h.ncols() {
                    // a reservoir with no land data
                    if row == 9 && col == 0 {
                        values.push(DEFAULT_NODATA);
                        continue;
                    }
                    let y = row as f64 / 9.0;
                    let x = col as f64 / 9.0;
                    let v = base + ns * y + ew * x + shift * k as f64 + noise * (2.0 * rng.random::<f64>() - 1.0);
                    values.push(round_to(v, dec));
                }
            }
            write(&Raster::new(h, values).unwrap(), dir.join(format!("{name}_{m}.asc")));
        }
    }

    let mut csv = String::from("lat,lon,elevation_m\n");
    for row in 0..h.nrows() {
        for col in 0..h.ncols() {
            let (lat, lon) = h.cell_center(row, col).unwrap();
            let z = 180.0 + 25.0 * row as f64 + 12.0 * col as f64 + rng.random_range(0.0..10.0);
            csv.push_str(&format!("{},{},{}\n", round_to(lat, 2), round_to(lon, 2), round_to(z, 1)));
        }
    }
    fs::write(dir.join("elevation.csv"), csv).unwrap();
    fs::write(
        dir.join("climate.toml"),
        "# Synthetic 1°×1° FLDAS-like cut: six variables for 2020-07..2020-09\n\
         grid_pattern = \"{variable}_{month}.asc\"\nelevation = \"elevation.csv\"\nwind_height_m = 2.0\n",
    )
    .unwrap();
}

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    population(&root.join("pop"));
    climate(&root.join("climate"));
    println!("fixtures written to {}", root.display());
}
