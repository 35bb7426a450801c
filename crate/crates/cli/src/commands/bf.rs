use std::path::Path;

use clap::ValueEnum;
use svjump::forecast::bayes_factor_series;

use crate::error::{CliError, CliResult};
use crate::output::{num, RunDir};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Form {
    /// The joint predictive column of each forecast.
    Joint,
    /// The product of per-stock predictives.
    Product,
}

struct Forecast {
    dates: Vec<String>,
    joint: Vec<f64>,
    stocks: Vec<String>,
    per_stock: Vec<Vec<f64>>,
}

fn read_forecast(path: &Path) -> CliResult<Forecast> {
    let bad = |msg: String| CliError::Data(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "step" || &header[1] != "date" || &header[2] != "log_pred" {
        return Err(bad("not a forecast table".into()));
    }
    let stocks: Vec<String> = header
        .iter()
        .skip(3)
        .map(|h| h.strip_prefix("log_pred_").unwrap_or(h).to_owned())
        .collect();
    let mut f = Forecast {
        dates: Vec::new(),
        joint: Vec::new(),
        per_stock: vec![Vec::new(); stocks.len()],
        stocks,
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let val = |k: usize| -> CliResult<f64> {
            rec[k]
                .parse()
                .map_err(|e| bad(format!("line {line}: {:?}: {e}", &rec[k])))
        };
        f.dates.push(rec[1].to_owned());
        f.joint.push(val(2)?);
        for (k, col) in f.per_stock.iter_mut().enumerate() {
            col.push(val(3 + k)?);
        }
    }
    Ok(f)
}

impl Forecast {
    fn series(&self, form: Form) -> Vec<f64> {
        match form {
            Form::Joint => self.joint.clone(),
            Form::Product => (0..self.dates.len())
                .map(|j| self.per_stock.iter().map(|s| s[j]).sum())
                .collect(),
        }
    }
}

pub fn run(numer: &Path, denom: &Path, form: Form, per_stock: bool, dir: &RunDir) -> CliResult<()> {
    let a = read_forecast(numer)?;
    let b = read_forecast(denom)?;
    if a.dates != b.dates {
        return Err(CliError::Data("the two forecasts cover different dates".into()));
    }
    let cum = |v: &[f64]| svjump::forecast::cumulative(v);
    let (sa, sb) = (a.series(form), b.series(form));
    let bf = bayes_factor_series(&sa, &sb)?;
    let (ca, cb) = (cum(&sa), cum(&sb));
    let shared: Vec<(usize, usize)> = if per_stock {
        a.stocks
            .iter()
            .enumerate()
            .filter_map(|(i, s)| b.stocks.iter().position(|x| x == s).map(|k| (i, k)))
            .collect()
    } else {
        Vec::new()
    };
    let stock_bf = shared
        .iter()
        .map(|&(i, k)| bayes_factor_series(&a.per_stock[i], &b.per_stock[k]))
        .collect::<svjump::Result<Vec<_>>>()?;

    let mut w = dir.csv("bf.csv")?;
    let mut header: Vec<String> = ["step", "date", "logml_model_a", "logml_model_b", "log_bf"]
        .map(str::to_owned)
        .to_vec();
    header.extend(shared.iter().map(|&(i, _)| format!("log_bf_{}", a.stocks[i])));
    w.write_record(&header)?;
    for j in 0..bf.len() {
        let mut row = vec![(j + 1).to_string(), a.dates[j].clone(), num(ca[j]), num(cb[j]), num(bf[j])];
        row.extend(stock_bf.iter().map(|s| num(s[j])));
        w.write_record(&row)?;
    }
    w.flush().map_err(CliError::io(dir.file("bf.csv")))?;
    Ok(())
}
