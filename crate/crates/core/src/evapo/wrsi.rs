use super::{kc_for, penman_monteith, ClimateRecord, CropSpec, EvapoError, Season, SiteRecord};
use crate::calendar::YearMonth;
use crate::numeric::Fsum;

/// Crop water requirement, `pet · kc`, in the units of `pet`.
pub fn water_requirement(pet_mm_day: f64, kc: f64) -> f64 {
    pet_mm_day * kc
}

fn check_inputs(aet: f64, wr: f64) -> Result<(), EvapoError> {
    for (field, value) in [("aet", aet), ("wr", wr)] {
        if !value.is_finite() {
            return Err(EvapoError::NonFinite { field });
        }
        if value < 0.0 {
            return Err(EvapoError::Negative { field, value });
        }
    }
    Ok(())
}

fn ratio(aet: f64, wr: f64, cap: bool) -> Option<f64> {
    if wr == 0.0 {
        return None;
    }
    let v = 100.0 * (aet / wr);
    Some(if cap { v.min(100.0) } else { v })
}

/// `100 · aet / wr`, or `None` when nothing was required.
pub fn wrsi_monthly(aet_mm_day: f64, wr_mm_day: f64, cap: bool) -> Result<Option<f64>, EvapoError> {
    check_inputs(aet_mm_day, wr_mm_day)?;
    Ok(ratio(aet_mm_day, wr_mm_day, cap))
}

/// Seasonal index from `(month, aet, wr)` daily rates, weighting each month
/// by its number of days. Weights are taken relative to the first month so
/// a one-month season reproduces the monthly index bit for bit.
pub fn wrsi_seasonal(months: &[(YearMonth, f64, f64)], cap: bool) -> Result<Option<f64>, EvapoError> {
    if months.is_empty() {
        return Err(EvapoError::AllDormant("season".into()));
    }
    let base = f64::from(months[0].0.days());
    let mut aet = Fsum::new();
    let mut wr = Fsum::new();
    for &(m, a, w) in months {
        check_inputs(a, w)?;
        let days = f64::from(m.days()) / base;
        aet.add(a * days);
        wr.add(w * days);
    }
    Ok(ratio(aet.value(), wr.value(), cap))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrsiMonth {
    pub month: YearMonth,
    pub pet: f64,
    pub season: Season,
    pub wr: Option<f64>,
    pub aet: f64,
    pub wrsi: Option<f64>,
}

/// Seasonal index over one run of consecutive growing months.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonSummary {
    pub start: YearMonth,
    pub end: YearMonth,
    pub wrsi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrsiSeries {
    pub crop: String,
    pub months: Vec<WrsiMonth>,
    pub seasons: Vec<SeasonSummary>,
}

/// Monthly PET, Kc, WR and WRSI for one site and crop, plus one seasonal
/// index per run of consecutive in-season months. `records` must be in
/// calendar order.
pub fn wrsi_series(
    crop: &CropSpec,
    records: &[ClimateRecord],
    site: &SiteRecord,
    cap: bool,
) -> Result<WrsiSeries, EvapoError> {
    let mut months = Vec::with_capacity(records.len());
    for c in records {
        let pet = penman_monteith(c, site)?;
        let season = kc_for(crop, c.year_month);
        let wr = season.kc().map(|kc| water_requirement(pet, kc));
        let wrsi = match wr {
            Some(wr) => wrsi_monthly(c.aet_mm_day, wr, cap)?,
            None => None,
        };
        months.push(WrsiMonth {
            month: c.year_month,
            pet,
            season,
            wr,
            aet: c.aet_mm_day,
            wrsi,
        });
    }

    let mut seasons = Vec::new();
    let mut run: Vec<(YearMonth, f64, f64)> = Vec::new();
    let mut flush = |run: &mut Vec<(YearMonth, f64, f64)>| -> Result<(), EvapoError> {
        if let (Some(first), Some(last)) = (run.first(), run.last()) {
            seasons.push(SeasonSummary {
                start: first.0,
                end: last.0,
                wrsi: wrsi_seasonal(run, cap)?,
            });
        }
        run.clear();
        Ok(())
    };
    for (i, m) in months.iter().enumerate() {
        let contiguous = i == 0 || months[i - 1].month.succ() == m.month;
        let starts_season = kc_for(crop, m.month) != Season::Dormant
            && m.month.month() == crop.planting_month;
        if !contiguous || starts_season {
            flush(&mut run)?;
        }
        match m.wr {
            Some(wr) => run.push((m.month, m.aet, wr)),
            None => flush(&mut run)?,
        }
    }
    flush(&mut run)?;

    Ok(WrsiSeries {
        crop: crop.name.clone(),
        months,
        seasons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ym(y: i32, m: u32) -> YearMonth {
        YearMonth::new(y, m).unwrap()
    }

    #[test]
    fn requirement_is_product() {
        assert_eq!(water_requirement(5.0, 1.0), 5.0);
        assert!((water_requirement(4.2, 1.15) - 4.83).abs() < 1e-12);
        assert_eq!(water_requirement(0.0, 0.7), 0.0);
    }

    #[test]
    fn monthly_cases() {
        assert_eq!(wrsi_monthly(3.3, 3.3, false).unwrap(), Some(100.0));
        assert_eq!(wrsi_monthly(2.5, 5.0, false).unwrap(), Some(50.0));
        assert_eq!(wrsi_monthly(1.0, 0.0, false).unwrap(), None);
        assert_eq!(wrsi_monthly(6.0, 3.0, false).unwrap(), Some(200.0));
        assert_eq!(wrsi_monthly(6.0, 3.0, true).unwrap(), Some(100.0));
        assert!(wrsi_monthly(-1.0, 3.0, false).is_err());
    }

    #[test]
    fn seasonal_cases() {
        assert_eq!(
            wrsi_seasonal(&[(ym(2020, 7), 2.5, 5.0)], false).unwrap(),
            wrsi_monthly(2.5, 5.0, false).unwrap()
        );
        // July and August both have 31 days
        let two = [(ym(2020, 7), 3.0, 6.0), (ym(2020, 8), 6.0, 6.0)];
        assert_eq!(wrsi_seasonal(&two, false).unwrap(), Some(75.0));
        assert!(matches!(wrsi_seasonal(&[], false), Err(EvapoError::AllDormant(_))));
    }

    #[test]
    fn seasonal_weights_by_days() {
        // February 2021 has 28 days, March 31
        let s = wrsi_seasonal(&[(ym(2021, 2), 0.0, 1.0), (ym(2021, 3), 1.0, 1.0)], false).unwrap();
        assert!((s.unwrap() - 100.0 * 31.0 / 59.0).abs() < 1e-12);
    }

    fn climate(m: YearMonth, aet: f64) -> ClimateRecord {
        ClimateRecord {
            year_month: m,
            tair_c: 29.0,
            ea_kpa: 2.2,
            net_sw: 15.0,
            net_lw: 4.0,
            wind_2m: 2.0,
            aet_mm_day: aet,
        }
    }

    #[test]
    fn series_marks_dormant_months() {
        let crop = super::super::default_crops().remove(0);
        let site = SiteRecord {
            lat: 13.5,
            lon: 2.1,
            elevation_m: 210.0,
        };
        let recs: Vec<_> = ym(2020, 5).through(ym(2020, 10)).into_iter().map(|m| climate(m, 2.0)).collect();
        let s = wrsi_series(&crop, &recs, &site, false).unwrap();
        assert!(s.months[0].wr.is_none() && s.months[0].wrsi.is_none());
        assert!(s.months[1..5].iter().all(|m| m.wrsi.is_some()));
        assert!(s.months[5].wrsi.is_none());
        for m in &s.months[1..5] {
            assert_eq!(m.wr.unwrap(), m.pet * m.season.kc().unwrap());
        }
        assert_eq!(s.seasons.len(), 1);
        assert_eq!((s.seasons[0].start, s.seasons[0].end), (ym(2020, 6), ym(2020, 9)));
    }

    #[test]
    fn series_splits_seasons_by_year() {
        let crop = super::super::default_crops().remove(0);
        let site = SiteRecord {
            lat: 13.5,
            lon: 2.1,
            elevation_m: 210.0,
        };
        let recs: Vec<_> = ym(2019, 6).through(ym(2020, 9)).into_iter().map(|m| climate(m, 2.0)).collect();
        let s = wrsi_series(&crop, &recs, &site, false).unwrap();
        assert_eq!(s.seasons.len(), 2);
    }

    proptest! {
        #[test]
        fn full_satisfaction(x in 1e-6f64..1e3) {
            prop_assert_eq!(wrsi_monthly(x, x, false).unwrap(), Some(100.0));
        }

        #[test]
        fn single_month_season(a in 0.0f64..20.0, w in 1e-3f64..20.0, month in 1u32..=12) {
            let m = YearMonth::new(2021, month).unwrap();
            prop_assert_eq!(wrsi_seasonal(&[(m, a, w)], false).unwrap(), wrsi_monthly(a, w, false).unwrap());
        }

        #[test]
        fn constant_ratio_season(r in 0.0f64..2.0, wrs in prop::collection::vec(0.1f64..10.0, 1..12)) {
            let months: Vec<_> = ym(2020, 1).through(ym(2020, 12)).into_iter().zip(&wrs)
                .map(|(m, &w)| (m, r * w, w)).collect();
            let s = wrsi_seasonal(&months, false).unwrap().unwrap();
            prop_assert!((s - 100.0 * r).abs() < 1e-9);
        }

        #[test]
        fn scale_invariant(k in 0.01f64..100.0, pairs in prop::collection::vec((0.0f64..10.0, 0.1f64..10.0), 1..12)) {
            let months: Vec<_> = ym(2020, 1).through(ym(2020, 12)).into_iter().zip(&pairs)
                .map(|(m, &(a, w))| (m, a, w)).collect();
            let scaled: Vec<_> = months.iter().map(|&(m, a, w)| (m, a * k, w * k)).collect();
            let a = wrsi_seasonal(&months, false).unwrap().unwrap();
            let b = wrsi_seasonal(&scaled, false).unwrap().unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }
}
