use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::DigitString;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub gtin: DigitString,
    pub name: String,
    #[serde(default)]
    pub price_minor: Option<i64>,
    #[serde(default)]
    pub currency: Option<String>,
}

impl ProductRecord {
    /// "2.49 EUR" style price, when both parts are known.
    pub fn price_text(&self) -> Option<String> {
        let (minor, cur) = (self.price_minor?, self.currency.as_deref()?);
        let sign = if minor < 0 { "-" } else { "" };
        let abs = minor.unsigned_abs();
        Some(format!("{sign}{}.{:02} {cur}", abs / 100, abs % 100))
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("catalog row {row}: duplicate gtin {gtin}")]
    Duplicate { row: usize, gtin: DigitString },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Product catalog keyed by GTIN, read from `gtin,name,price_minor,currency` CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    products: BTreeMap<DigitString, ProductRecord>,
}

impl Catalog {
    pub fn from_reader<R: std::io::Read>(r: R) -> Result<Self, CatalogError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut products = BTreeMap::new();
        for (i, row) in rdr.deserialize::<ProductRecord>().enumerate() {
            let row_no = i + 2;
            let rec = row.map_err(|e| CatalogError::BadRow {
                row: row_no,
                reason: e.to_string(),
            })?;
            if products.contains_key(&rec.gtin) {
                return Err(CatalogError::Duplicate {
                    row: row_no,
                    gtin: rec.gtin,
                });
            }
            products.insert(rec.gtin, rec);
        }
        Ok(Self { products })
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let file = std::fs::File::open(path).map_err(csv::Error::from)?;
        Self::from_reader(file)
    }

    pub fn get(&self, gtin: &DigitString) -> Option<&ProductRecord> {
        self.products.get(gtin)
    }

    pub fn len(&self) -> usize {
        self.products.len()
    }

    pub fn is_empty(&self) -> bool {
        self.products.is_empty()
    }
}

/// Optional `GET {base_url}/product/{gtin}` fallback for catalog misses.
#[derive(Debug, Clone)]
pub struct RemoteCatalog {
    pub base_url: String,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupOutcome {
    pub product: Option<ProductRecord>,
    /// Set when the remote lookup failed for a reason other than a 404.
    pub warning: bool,
}

pub fn lookup(digits: &DigitString, catalog: &Catalog, remote: Option<&RemoteCatalog>) -> LookupOutcome {
    if let Some(p) = catalog.get(digits) {
        return LookupOutcome {
            product: Some(p.clone()),
            warning: false,
        };
    }
    let Some(remote) = remote else {
        return LookupOutcome {
            product: None,
            warning: false,
        };
    };
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(remote.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let url = format!("{}/product/{}", remote.base_url.trim_end_matches('/'), digits);
    let miss = |warning| LookupOutcome {
        product: None,
        warning,
    };
    match agent.get(&url).call() {
        Ok(mut resp) if resp.status() == 200 => match resp.body_mut().read_json::<ProductRecord>() {
            Ok(p) if p.gtin == *digits => LookupOutcome {
                product: Some(p),
                warning: false,
            },
            _ => miss(true),
        },
        Ok(resp) if resp.status() == 404 => miss(false),
        Ok(resp) => {
            log::warn!("product lookup for {digits} returned HTTP {}", resp.status());
            miss(true)
        }
        Err(e) => {
            log::warn!("product lookup for {digits} failed: {e}");
            miss(true)
        }
    }
}
