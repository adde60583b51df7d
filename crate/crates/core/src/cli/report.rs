//! Long-format report CSV: `section,label,value`.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::gpca::FactorizationResult;
use crate::pipeline::Identification;
use crate::veronese::{ExponentBasis, ModelOrders, Submodel, SubmodelSet};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub section: String,
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn push(&mut self, section: &str, label: impl Into<String>, value: f64) {
        self.rows.push(ReportRow {
            section: section.to_string(),
            label: label.into(),
            value,
        });
    }

    /// Summary, coefficients, submodels and (when scanning) the curve.
    /// `known_s2` is the variance that was given for known-noise runs.
    pub fn identification(
        orders: ModelOrders,
        ident: &Identification,
        factorization: &FactorizationResult,
        known_s2: Option<f64>,
    ) -> Report {
        let mut r = Report::default();
        r.push("summary", "n", orders.n() as f64);
        r.push("summary", "na", orders.na() as f64);
        r.push("summary", "nc", orders.nc() as f64);
        r.push("summary", "n_samples", ident.result.n_samples as f64);
        r.push("summary", "sigma_min", ident.result.sigma_min);
        r.push("summary", "sigma_max", ident.result.sigma_max);
        if let Some(s2) = known_s2 {
            r.push("summary", "s2", s2);
        }
        if let Some(scan) = &ident.scan {
            r.push("summary", "s_star", scan.s_star);
            r.push("summary", "s2_star", scan.s_star * scan.s_star);
            r.push("summary", "threshold", scan.threshold);
            r.push(
                "summary",
                "below_threshold",
                f64::from(u8::from(scan.below_threshold)),
            );
        }
        let basis = ExponentBasis::new(orders);
        for (i, c) in ident.result.coefficients.as_slice().iter().enumerate() {
            r.push("coefficient", basis.label(i), *c);
        }
        for (i, m) in factorization.submodels.models().iter().enumerate() {
            for (j, a) in m.a.iter().enumerate() {
                r.push("submodel", format!("{}:a{}", i + 1, j + 1), *a);
            }
            for (j, c) in m.c.iter().enumerate() {
                r.push("submodel", format!("{}:c{}", i + 1, j + 1), *c);
            }
        }
        if let Some(scan) = &ident.scan {
            for (s, sigma) in &scan.curve {
                r.push("curve", s.to_string(), *sigma);
            }
        }
        let t = ident.timings;
        for (label, v) in [
            ("accumulate_s", t.accumulate),
            ("assemble_s", t.assemble),
            ("svd_s", t.svd),
            ("scan_s", t.scan),
            ("factor_s", t.factor),
            ("total_s", t.total()),
        ] {
            r.push("timing", label, v);
        }
        r
    }

    pub fn write<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["section", "label", "value"])?;
        for row in &self.rows {
            if !row.value.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite value for {}/{}",
                    row.section, row.label
                )));
            }
            w.write_record([&row.section, &row.label, &row.value.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(input: R) -> Result<Report> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut report = Report::default();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Format(format!(
                    "report row with {} fields",
                    rec.len()
                )));
            }
            let value: f64 = rec[2]
                .parse()
                .map_err(|_| Error::Format(format!("bad report value '{}'", &rec[2])))?;
            report.push(&rec[0], &rec[1], value);
        }
        Ok(report)
    }

    pub fn value(&self, section: &str, label: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.section == section && r.label == label)
            .map(|r| r.value)
    }

    pub fn section<'a>(&'a self, section: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.section == section)
    }

    pub fn orders(&self) -> Result<ModelOrders> {
        let get = |label: &str| {
            self.value("summary", label)
                .filter(|v| v.fract() == 0.0 && *v >= 0.0)
                .map(|v| v as usize)
                .ok_or_else(|| Error::Format(format!("report has no summary/{label}")))
        };
        ModelOrders::new(get("n")?, get("na")?, get("nc")?)
    }

    /// Submodels listed in the `submodel` section.
    pub fn submodels(&self) -> Result<SubmodelSet> {
        let orders = self.orders()?;
        let mut models =
            vec![
                Submodel::new(vec![f64::NAN; orders.na()], vec![f64::NAN; orders.nc()]);
                orders.n()
            ];
        for row in self.section("submodel") {
            let bad = || Error::Format(format!("bad submodel label '{}'", row.label));
            let (mode, coef) = row.label.split_once(':').ok_or_else(bad)?;
            let mode: usize = mode.parse().map_err(|_| bad())?;
            let m = mode
                .checked_sub(1)
                .and_then(|i| models.get_mut(i))
                .ok_or_else(bad)?;
            let (target, idx) = if let Some(j) = coef.strip_prefix('a') {
                (&mut m.a, j)
            } else if let Some(j) = coef.strip_prefix('c') {
                (&mut m.c, j)
            } else {
                return Err(bad());
            };
            let idx: usize = idx.parse().map_err(|_| bad())?;
            *idx.checked_sub(1)
                .and_then(|j| target.get_mut(j))
                .ok_or_else(bad)? = row.value;
        }
        if models
            .iter()
            .any(|m| m.a.iter().chain(&m.c).any(|v| v.is_nan()))
        {
            return Err(Error::Format("report lists incomplete submodels".into()));
        }
        SubmodelSet::new(models, orders)
    }
}
