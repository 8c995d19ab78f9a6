//! Converts the public Instacart CSV release into the ingest file formats.
//!
//! Order time is the user's cumulative `days_since_prior_order` in seconds
//! plus the order number, so same-day orders keep their sequence. Items of
//! an order are written in add-to-cart order. Item tokens are the lowercased
//! words of the product name; aisle and department are left out so the
//! department probe does not see its own labels.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dualcart_core::corpus::SECONDS_PER_DAY;
use thiserror::Error;

pub const ORDERS: &str = "orders.tsv";
pub const ITEMS: &str = "items.tsv";
pub const LABELS: &str = "labels.tsv";
pub const CONFIG: &str = "run.conf";

#[derive(Debug, Error)]
pub enum InstacartError {
    #[error("cannot read {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: missing column {column}")]
    Column { path: PathBuf, column: &'static str },
    #[error("{path}:{line}: {msg}")]
    Value { path: PathBuf, line: u64, msg: String },
}

struct Table {
    path: PathBuf,
    reader: csv::Reader<File>,
    columns: Vec<usize>,
}

impl Table {
    fn open(path: PathBuf, wanted: &[&'static str]) -> Result<Self, InstacartError> {
        let csv_err = |source| InstacartError::Csv {
            path: path.clone(),
            source,
        };
        let mut reader = csv::Reader::from_path(&path).map_err(csv_err)?;
        let headers = reader.headers().map_err(csv_err)?.clone();
        let columns = wanted
            .iter()
            .map(|&c| {
                headers.iter().position(|h| h.trim() == c).ok_or(InstacartError::Column {
                    path: path.clone(),
                    column: c,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { path, reader, columns })
    }

    /// Calls `f` with the wanted fields of every row, in `wanted` order.
    fn for_each(
        mut self,
        mut f: impl FnMut(u64, &[&str]) -> Result<(), InstacartError>,
    ) -> Result<(), InstacartError> {
        let mut rec = csv::StringRecord::new();
        loop {
            let more = self.reader.read_record(&mut rec).map_err(|source| InstacartError::Csv {
                path: self.path.clone(),
                source,
            })?;
            if !more {
                return Ok(());
            }
            let line = rec.position().map_or(0, |p| p.line());
            let fields: Vec<&str> = self.columns.iter().map(|&c| rec.get(c).unwrap_or("").trim()).collect();
            f(line, &fields)?;
        }
    }
}

/// Lowercased alphanumeric words of a product name.
pub fn name_tokens(name: &str) -> Vec<String> {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Row counts of a conversion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Converted {
    pub orders: usize,
    pub events: usize,
    pub products: usize,
}

/// Reads `orders.csv`, `order_products__prior.csv`,
/// `order_products__train.csv` (if present), `products.csv` and
/// `departments.csv` from `src`, writes the converted corpus and a run
/// config into `out`.
pub fn convert(src: &Path, out: &Path) -> Result<Converted, InstacartError> {
    let werr = |path: &Path| {
        let path = path.to_path_buf();
        move |source| InstacartError::Write { path, source }
    };
    fs::create_dir_all(out).map_err(werr(out))?;

    // order_id -> (user_id, time)
    let mut orders: HashMap<u32, (u32, i64)> = HashMap::new();
    let mut elapsed: HashMap<u32, i64> = HashMap::new();
    let path = src.join("orders.csv");
    let p = path.clone();
    Table::open(path, &["order_id", "user_id", "order_number", "days_since_prior_order"])?.for_each(|line, f| {
        let bad = |msg: String| InstacartError::Value {
            path: p.clone(),
            line,
            msg,
        };
        let order: u32 = f[0].parse().map_err(|_| bad(format!("bad order_id {:?}", f[0])))?;
        let user: u32 = f[1].parse().map_err(|_| bad(format!("bad user_id {:?}", f[1])))?;
        let number: i64 = f[2].parse().map_err(|_| bad(format!("bad order_number {:?}", f[2])))?;
        let gap: f64 = if f[3].is_empty() {
            0.0
        } else {
            f[3].parse().map_err(|_| bad(format!("bad days_since_prior_order {:?}", f[3])))?
        };
        // orders.csv lists each user's orders by order_number
        let days = elapsed.entry(user).or_insert(0);
        *days += gap.round() as i64;
        orders.insert(order, (user, *days * SECONDS_PER_DAY + number));
        Ok(())
    })?;
    drop(elapsed);

    let orders_path = out.join(ORDERS);
    let mut w = BufWriter::new(File::create(&orders_path).map_err(werr(&orders_path))?);
    let mut events = 0usize;
    for name in ["order_products__prior.csv", "order_products__train.csv"] {
        let path = src.join(name);
        if name.ends_with("train.csv") && !path.exists() {
            continue;
        }
        let p = path.clone();
        let op = orders_path.clone();
        Table::open(path, &["order_id", "product_id"])?.for_each(|line, f| {
            let order: u32 = f[0].parse().map_err(|_| InstacartError::Value {
                path: p.clone(),
                line,
                msg: format!("bad order_id {:?}", f[0]),
            })?;
            let Some(&(user, time)) = orders.get(&order) else {
                return Err(InstacartError::Value {
                    path: p.clone(),
                    line,
                    msg: format!("order {order} not in orders.csv"),
                });
            };
            events += 1;
            writeln!(w, "{user}\t{order}\t{time}\t{}", f[1]).map_err(|source| InstacartError::Write {
                path: op.clone(),
                source,
            })
        })?;
    }
    w.flush().map_err(werr(&orders_path))?;

    let mut departments: HashMap<String, String> = HashMap::new();
    Table::open(src.join("departments.csv"), &["department_id", "department"])?.for_each(|_, f| {
        departments.insert(f[0].to_string(), f[1].replace(char::is_whitespace, "_"));
        Ok(())
    })?;
    let items_path = out.join(ITEMS);
    let labels_path = out.join(LABELS);
    let mut wi = BufWriter::new(File::create(&items_path).map_err(werr(&items_path))?);
    let mut wl = BufWriter::new(File::create(&labels_path).map_err(werr(&labels_path))?);
    let mut products = 0usize;
    let p = src.join("products.csv");
    Table::open(p.clone(), &["product_id", "product_name", "department_id"])?.for_each(|line, f| {
        products += 1;
        let dept = departments.get(f[2]).ok_or_else(|| InstacartError::Value {
            path: p.clone(),
            line,
            msg: format!("unknown department_id {:?}", f[2]),
        })?;
        writeln!(wi, "{}\t{}", f[0], name_tokens(f[1]).join(" ")).map_err(werr(&items_path))?;
        writeln!(wl, "{}\t{dept}", f[0]).map_err(werr(&labels_path))
    })?;
    wi.flush().map_err(werr(&items_path))?;
    wl.flush().map_err(werr(&labels_path))?;

    let conf = out.join(CONFIG);
    fs::write(
        &conf,
        format!(
            "# converted Instacart release\norders = {ORDERS}\nitem_context = {ITEMS}\nlabels = {LABELS}\ntime_kind = seconds\n"
        ),
    )
    .map_err(werr(&conf))?;
    Ok(Converted {
        orders: orders.len(),
        events,
        products,
    })
}

/// `id<TAB>label` lines.
pub fn read_labels(path: &Path) -> std::io::Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match line.split_once('\t') {
            Some((id, label)) if !id.trim().is_empty() && !label.trim().is_empty() => {
                out.push((id.trim().to_string(), label.trim().to_string()))
            }
            _ => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: expected `id<TAB>label`", path.display(), n + 1),
                ))
            }
        }
    }
    Ok(out)
}
