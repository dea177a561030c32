//! Whole-person integerization.
//!
//! Every cell is rounded down, and the whole people hidden in the dropped
//! fractions are handed back one at a time to the most populated cells that
//! were rounded down. Cells are ranked by value (descending), then
//! fractional part (descending), then row-major index (ascending), so the
//! recipients form a prefix of a strict total order over cell identities.

use std::cmp::Ordering;

use super::PopError;
use crate::numeric::fsum;
use crate::raster_io::Raster;

#[derive(Debug, Clone, Copy)]
struct Ranked {
    id: usize,
    value: f64,
    frac: f64,
}

fn priority(a: &Ranked, b: &Ranked) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then(b.frac.total_cmp(&a.frac))
        .then(a.id.cmp(&b.id))
}

/// Target integer total: the float sum rounded half to even.
pub fn target_total(values: impl IntoIterator<Item = f64>) -> f64 {
    fsum(values).round_ties_even()
}

/// Ids of the cells that receive `+1` on top of their floor.
///
/// `cells` are `(id, value)` pairs in any storage order; the result is sorted
/// by id and depends only on the set of pairs.
pub fn recipients(cells: &[(usize, f64)]) -> Result<Vec<usize>, PopError> {
    if let Some(&(id, value)) = cells.iter().find(|(_, v)| *v < 0.0 || !v.is_finite()) {
        return Err(PopError::NegativeValue { index: id, value });
    }
    let n = target_total(cells.iter().map(|c| c.1));
    let floors = fsum(cells.iter().map(|c| c.1.floor()));
    let deficit = n - floors;
    if deficit < 0.0 {
        return Err(PopError::Invariant(format!(
            "negative redistribution count {deficit} (target {n}, floors {floors})"
        )));
    }
    let mut need = deficit as usize;
    if need == 0 {
        return Ok(Vec::new());
    }

    let (mut eligible, mut rest): (Vec<Ranked>, Vec<Ranked>) = cells
        .iter()
        .map(|&(id, value)| Ranked {
            id,
            value,
            frac: value - value.floor(),
        })
        .partition(|c| c.frac > 0.0);

    let mut chosen = Vec::with_capacity(need);
    take_top(&mut eligible, need, &mut chosen);
    need -= chosen.len();
    if need > 0 {
        // more whole people than fractional cells: continue down the same order
        take_top(&mut rest, need, &mut chosen);
        if chosen.len() < deficit as usize {
            return Err(PopError::Invariant(format!(
                "cannot place {deficit} people on {} cells",
                cells.len()
            )));
        }
    }
    chosen.sort_unstable();
    Ok(chosen)
}

fn take_top(pool: &mut [Ranked], k: usize, out: &mut Vec<usize>) {
    let k = k.min(pool.len());
    if k == 0 {
        return;
    }
    if k < pool.len() {
        pool.select_nth_unstable_by(k - 1, priority);
    }
    out.extend(pool[..k].iter().map(|c| c.id));
}

/// Convert a non-negative real raster into whole people while conserving
/// the rounded total. Nodata cells are left untouched.
pub fn integerize(r: &Raster) -> Result<Raster, PopError> {
    let cells: Vec<(usize, f64)> = r.data_cells().collect();
    let bumps = recipients(&cells)?;
    let mut values = r.values().to_vec();
    for &(i, v) in &cells {
        values[i] = v.floor();
    }
    for i in bumps {
        values[i] += 1.0;
    }
    Ok(Raster::new(*r.header(), values)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster_io::{GridHeader, DEFAULT_NODATA};
    use proptest::prelude::*;

    fn row(values: &[f64]) -> Raster {
        let h = GridHeader::new(values.len(), 1, 0.0, 0.0, 0.1, DEFAULT_NODATA).unwrap();
        Raster::new(h, values.to_vec()).unwrap()
    }

    #[test]
    fn already_integral() {
        assert_eq!(integerize(&row(&[5.0, 3.0, 0.0])).unwrap().values(), &[5.0, 3.0, 0.0]);
    }

    #[test]
    fn largest_value_gets_the_person() {
        // N = round(4.0) = 4, floors sum to 3, the 2.3 cell outranks 1.4
        assert_eq!(integerize(&row(&[1.4, 2.3, 0.3])).unwrap().values(), &[1.0, 3.0, 0.0]);
    }

    #[test]
    fn ties_break_row_major() {
        assert_eq!(
            integerize(&row(&[0.5, 0.5, 0.5, 0.5])).unwrap().values(),
            &[1.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn half_even_target() {
        // sum 2.5 rounds to 2; sum 3.5 rounds to 4
        let a = integerize(&row(&[1.25, 1.25])).unwrap();
        assert_eq!(a.values(), &[1.0, 1.0]);
        let b = integerize(&row(&[1.75, 1.75])).unwrap();
        assert_eq!(b.values(), &[2.0, 2.0]);
    }

    #[test]
    fn frac_breaks_value_ties_never_needed_but_ordered() {
        // equal values always have equal fractions, so the id decides
        let r = integerize(&row(&[0.3, 0.9, 0.3, 0.9, 0.3])).unwrap();
        // sum 2.7 -> 3; the two 0.9 cells then the first 0.3
        assert_eq!(r.values(), &[1.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn nodata_preserved_and_negative_rejected() {
        let r = integerize(&row(&[DEFAULT_NODATA, 0.6, 0.6])).unwrap();
        assert_eq!(r.values(), &[DEFAULT_NODATA, 1.0, 0.0]);
        assert!(matches!(
            integerize(&row(&[1.0, -0.5])),
            Err(PopError::NegativeValue { index: 1, .. })
        ));
    }

    fn arb_cells() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(
            prop_oneof![4 => 0.0f64..50.0, 1 => (0u32..20).prop_map(f64::from), 1 => 0.0f64..1.0],
            1..300,
        )
    }

    proptest! {
        #[test]
        fn conserves_and_bounds(values in arb_cells()) {
            let out = integerize(&row(&values)).unwrap();
            let expected = target_total(values.iter().copied());
            prop_assert_eq!(fsum(out.values().iter().copied()), expected);
            for (o, v) in out.values().iter().zip(&values) {
                prop_assert!(*o == v.floor() || *o == v.floor() + 1.0);
            }
        }

        #[test]
        fn recipients_form_a_prefix(values in arb_cells()) {
            let out = integerize(&row(&values)).unwrap();
            let mut ranked: Vec<Ranked> = values.iter().enumerate()
                .map(|(id, &value)| Ranked { id, value, frac: value - value.floor() })
                .filter(|c| c.frac > 0.0)
                .collect();
            ranked.sort_by(priority);
            let got: Vec<bool> = ranked.iter().map(|c| out.values()[c.id] > c.value.floor()).collect();
            // once a cell misses out, nobody later in the order gets a person
            let first_miss = got.iter().position(|g| !g).unwrap_or(got.len());
            prop_assert!(got[first_miss..].iter().all(|g| !g));
        }

        #[test]
        fn idempotent(values in arb_cells()) {
            let once = integerize(&row(&values)).unwrap();
            prop_assert_eq!(integerize(&once).unwrap(), once);
        }

        #[test]
        fn storage_order_irrelevant(values in arb_cells(), seed in any::<u64>()) {
            let cells: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
            let mut shuffled = cells.clone();
            // Fisher-Yates with a xorshift stream
            let mut s = seed | 1;
            for i in (1..shuffled.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(recipients(&cells).unwrap(), recipients(&shuffled).unwrap());
        }
    }
}
