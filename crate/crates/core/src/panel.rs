//! Price ingestion, currency conversion and log-return panels.
//!
//! File formats (all comma-separated with a header row):
//!
//! * prices: `date,<id_1>,...,<id_n>`, one row per ISO-8601 date, empty cell = missing
//! * metadata: `id,sector,country,currency`
//! * fx: `date,currency,rate`, where `rate` converts one unit of `currency`
//!   into the base currency
//! * returns / residuals: same layout as prices, optionally preceded by
//!   `#` comment lines recording provenance

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{
    csv_reader, expect_header, expect_len, fmt_f64, open, parse_f64, record_line, source_name,
};

/// Which label partitions the companies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Sector,
    Country,
    /// Every company in one group (the market as a whole).
    All,
}

impl Grouping {
    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Sector => "sector",
            Grouping::Country => "country",
            Grouping::All => "all",
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sector" => Ok(Grouping::Sector),
            "country" => Ok(Grouping::Country),
            "all" => Ok(Grouping::All),
            other => Err(Error::invalid(format!(
                "unknown grouping `{other}` (expected sector, country or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanyMeta {
    pub id: String,
    pub sector: String,
    pub country: String,
    pub currency: String,
}

impl CompanyMeta {
    pub fn label(&self, grouping: Grouping) -> &str {
        match grouping {
            Grouping::Sector => &self.sector,
            Grouping::Country => &self.country,
            Grouping::All => "all",
        }
    }
}

/// Closing prices, one row per company.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub companies: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `prices[i][t]`: company `i` on `dates[t]`.
    pub prices: Vec<Vec<f64>>,
    pub meta: Vec<CompanyMeta>,
}

impl PricePanel {
    pub fn new(
        companies: Vec<String>,
        dates: Vec<NaiveDate>,
        prices: Vec<Vec<f64>>,
        meta: Vec<CompanyMeta>,
    ) -> Result<Self> {
        check_dates(&dates)?;
        check_rows(&companies, &prices, dates.len(), &meta)?;
        for (id, row) in companies.iter().zip(&prices) {
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
                return Err(Error::invalid(format!(
                    "company `{id}` has non-positive or non-finite price {p}"
                )));
            }
        }
        Ok(Self {
            companies,
            dates,
            prices,
            meta,
        })
    }

    pub fn n_companies(&self) -> usize {
        self.companies.len()
    }

    pub fn n_dates(&self) -> usize {
        self.dates.len()
    }

    pub fn currency(&self, i: usize) -> &str {
        &self.meta[i].currency
    }
}

/// Daily log returns, one row per company.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    pub companies: Vec<String>,
    pub dates: Vec<NaiveDate>,
    /// `returns[i][t]`: company `i` on `dates[t]`.
    pub returns: Vec<Vec<f64>>,
    pub labels: Vec<CompanyMeta>,
}

impl ReturnsPanel {
    pub fn new(
        companies: Vec<String>,
        dates: Vec<NaiveDate>,
        returns: Vec<Vec<f64>>,
        labels: Vec<CompanyMeta>,
    ) -> Result<Self> {
        check_dates(&dates)?;
        check_rows(&companies, &returns, dates.len(), &labels)?;
        for (id, row) in companies.iter().zip(&returns) {
            if row.iter().any(|r| !r.is_finite()) {
                return Err(Error::invalid(format!(
                    "company `{id}` has a non-finite return"
                )));
            }
        }
        Ok(Self {
            companies,
            dates,
            returns,
            labels,
        })
    }

    pub fn n_companies(&self) -> usize {
        self.companies.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    /// Cross-section of all companies on day `t`.
    pub fn day(&self, t: usize) -> Vec<f64> {
        self.returns.iter().map(|row| row[t]).collect()
    }

    /// Company indices per label, labels in sorted order.
    pub fn groups(&self, grouping: Grouping) -> BTreeMap<String, Vec<usize>> {
        group_indices(&self.labels, grouping)
    }

    pub fn with_returns(&self, returns: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            self.companies.clone(),
            self.dates.clone(),
            returns,
            self.labels.clone(),
        )
    }
}

pub(crate) fn group_indices(
    labels: &[CompanyMeta],
    grouping: Grouping,
) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, m) in labels.iter().enumerate() {
        groups
            .entry(m.label(grouping).to_owned())
            .or_default()
            .push(i);
    }
    groups
}

fn check_dates(dates: &[NaiveDate]) -> Result<()> {
    if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "dates not strictly increasing at {} -> {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

fn check_rows(
    companies: &[String],
    rows: &[Vec<f64>],
    t: usize,
    meta: &[CompanyMeta],
) -> Result<()> {
    if rows.len() != companies.len() {
        return Err(Error::Dimension {
            expected: companies.len(),
            got: rows.len(),
        });
    }
    if meta.len() != companies.len() {
        return Err(Error::Dimension {
            expected: companies.len(),
            got: meta.len(),
        });
    }
    if let Some(row) = rows.iter().find(|r| r.len() != t) {
        return Err(Error::Dimension {
            expected: t,
            got: row.len(),
        });
    }
    if let Some((id, m)) = companies.iter().zip(meta).find(|(id, m)| **id != m.id) {
        return Err(Error::invalid(format!(
            "metadata row `{}` does not line up with company `{id}`",
            m.id
        )));
    }
    Ok(())
}

/// A company removed during ingestion because of missing prices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedCompany {
    pub id: String,
    pub missing_dates: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedPrices {
    pub panel: PricePanel,
    pub dropped: Vec<DroppedCompany>,
}

pub fn load_prices(price_path: &Path, meta_path: &Path) -> Result<LoadedPrices> {
    let meta = read_metadata(open(meta_path)?, &source_name(meta_path))?;
    read_prices(open(price_path)?, &source_name(price_path), &meta)
}

pub fn load_metadata(path: &Path) -> Result<Vec<CompanyMeta>> {
    read_metadata(open(path)?, &source_name(path))
}

pub fn read_metadata<R: Read>(rdr: R, source: &str) -> Result<Vec<CompanyMeta>> {
    let mut rdr = csv_reader(rdr);
    expect_header(&mut rdr, source, &["id", "sector", "country", "currency"])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        expect_len(&record, source, 4)?;
        let line = record_line(&record);
        let id = record[0].to_owned();
        if id.is_empty() {
            return Err(Error::parse(source, line, "empty company id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::parse(
                source,
                line,
                format!("duplicate company `{id}`"),
            ));
        }
        out.push(CompanyMeta {
            id,
            sector: record[1].to_owned(),
            country: record[2].to_owned(),
            currency: record[3].to_owned(),
        });
    }
    Ok(out)
}

/// Parses a price table against known metadata.
///
/// Dates on which no company has a price are discarded; any company missing a
/// price on one of the remaining dates is dropped and reported.
pub fn read_prices<R: Read>(rdr: R, source: &str, meta: &[CompanyMeta]) -> Result<LoadedPrices> {
    let mut rdr = csv_reader(rdr);
    let header = expect_header(&mut rdr, source, &["date"])?;
    let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut seen = HashSet::new();
    for id in &ids {
        if !seen.insert(id.as_str()) {
            return Err(Error::parse(
                source,
                1,
                format!("duplicate company column `{id}`"),
            ));
        }
    }
    let by_id: HashMap<&str, &CompanyMeta> = meta.iter().map(|m| (m.id.as_str(), m)).collect();
    if let Some(id) = ids.iter().find(|id| !by_id.contains_key(id.as_str())) {
        return Err(Error::MissingMetadata(id.clone()));
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); ids.len()];
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        expect_len(&record, source, ids.len() + 1)?;
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|_| Error::parse(source, line, format!("bad date `{}`", &record[0])))?;
        if let Some(prev) = dates.last() {
            if date <= *prev {
                return Err(Error::parse(
                    source,
                    line,
                    format!("date {date} does not follow {prev}"),
                ));
            }
        }
        let mut row = Vec::with_capacity(ids.len());
        for cell in record.iter().skip(1) {
            if cell.is_empty() {
                row.push(None);
                continue;
            }
            let p = parse_f64(source, line, cell)?;
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::parse(
                    source,
                    line,
                    format!("price `{cell}` must be positive and finite"),
                ));
            }
            row.push(Some(p));
        }
        // A date with no quotes at all is not part of the grid.
        if row.iter().all(Option::is_none) {
            continue;
        }
        dates.push(date);
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }

    let mut companies = Vec::new();
    let mut prices = Vec::new();
    let mut kept_meta = Vec::new();
    let mut dropped = Vec::new();
    for (id, col) in ids.into_iter().zip(columns) {
        let missing = col.iter().filter(|v| v.is_none()).count();
        if missing > 0 {
            dropped.push(DroppedCompany {
                id,
                missing_dates: missing,
            });
            continue;
        }
        kept_meta.push(by_id[id.as_str()].clone());
        prices.push(col.into_iter().flatten().collect());
        companies.push(id);
    }
    if companies.is_empty() {
        return Err(Error::invalid(format!(
            "{source}: no company has a complete price history"
        )));
    }
    let panel = PricePanel::new(companies, dates, prices, kept_meta)?;
    Ok(LoadedPrices { panel, dropped })
}

/// Per-date, per-currency conversion rates into a base currency.
#[derive(Debug, Clone, Default)]
pub struct FxTable {
    rates: HashMap<(NaiveDate, String), f64>,
}

impl FxTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, date: NaiveDate, currency: impl Into<String>, rate: f64) {
        self.rates.insert((date, currency.into()), rate);
    }

    pub fn rate(&self, date: NaiveDate, currency: &str) -> Option<f64> {
        self.rates.get(&(date, currency.to_owned())).copied()
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }
}

pub fn load_fx(path: &Path) -> Result<FxTable> {
    read_fx(open(path)?, &source_name(path))
}

pub fn read_fx<R: Read>(rdr: R, source: &str) -> Result<FxTable> {
    let mut rdr = csv_reader(rdr);
    expect_header(&mut rdr, source, &["date", "currency", "rate"])?;
    let mut table = FxTable::new();
    for record in rdr.records() {
        let record = record?;
        expect_len(&record, source, 3)?;
        let line = record_line(&record);
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|_| Error::parse(source, line, format!("bad date `{}`", &record[0])))?;
        let rate = parse_f64(source, line, &record[2])?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::parse(
                source,
                line,
                "rate must be positive and finite",
            ));
        }
        table.insert(date, &record[1], rate);
    }
    Ok(table)
}

/// Converts every price into `base` currency. Companies already quoted in
/// `base` are left untouched and need no rates.
pub fn convert_currency(panel: &PricePanel, fx: &FxTable, base: &str) -> Result<PricePanel> {
    let mut prices = panel.prices.clone();
    let mut meta = panel.meta.clone();
    for (i, row) in prices.iter_mut().enumerate() {
        let currency = panel.currency(i);
        if currency == base {
            continue;
        }
        for (t, p) in row.iter_mut().enumerate() {
            let date = panel.dates[t];
            let rate = fx.rate(date, currency).ok_or_else(|| Error::MissingRate {
                date,
                currency: currency.to_owned(),
            })?;
            *p *= rate;
        }
        meta[i].currency = base.to_owned();
    }
    PricePanel::new(panel.companies.clone(), panel.dates.clone(), prices, meta)
}

/// `r[i][t] = ln(P[i][t+1] / P[i][t])`, dated by the later day.
pub fn to_log_returns(panel: &PricePanel) -> Result<ReturnsPanel> {
    if panel.n_dates() < 2 {
        return Err(Error::invalid(format!(
            "log returns need at least 2 dates, got {}",
            panel.n_dates()
        )));
    }
    let returns = panel
        .prices
        .iter()
        .map(|row| row.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
        .collect();
    ReturnsPanel::new(
        panel.companies.clone(),
        panel.dates[1..].to_vec(),
        returns,
        panel.meta.clone(),
    )
}

/// Rebuilds a price panel by exponentiating cumulative returns from `start`.
///
/// The extra leading date is the previous weekday before the first return.
pub fn reconstruct_prices(panel: &ReturnsPanel, start: f64) -> Result<PricePanel> {
    let first = *panel
        .dates
        .first()
        .ok_or_else(|| Error::invalid("cannot reconstruct prices from an empty panel"))?;
    let mut dates = Vec::with_capacity(panel.n_days() + 1);
    dates.push(previous_weekday(first));
    dates.extend_from_slice(&panel.dates);
    let prices = panel
        .returns
        .iter()
        .map(|row| {
            let mut log_p = start.ln();
            let mut out = Vec::with_capacity(row.len() + 1);
            out.push(start);
            for r in row {
                log_p += r;
                out.push(log_p.exp());
            }
            out
        })
        .collect();
    PricePanel::new(panel.companies.clone(), dates, prices, panel.labels.clone())
}

pub(crate) fn previous_weekday(date: NaiveDate) -> NaiveDate {
    let mut d = date - Days::new(1);
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d - Days::new(1);
    }
    d
}

pub(crate) fn next_weekday(date: NaiveDate) -> NaiveDate {
    let mut d = date + Days::new(1);
    while matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
        d = d + Days::new(1);
    }
    d
}

fn write_table<W: Write + ?Sized>(
    out: &mut W,
    comments: &[String],
    companies: &[String],
    dates: &[NaiveDate],
    rows: &[Vec<f64>],
) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    write!(out, "date")?;
    for id in companies {
        write!(out, ",{id}")?;
    }
    writeln!(out)?;
    for (t, date) in dates.iter().enumerate() {
        write!(out, "{date}")?;
        for row in rows {
            write!(out, ",{}", fmt_f64(row[t]))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_prices<W: Write + ?Sized>(panel: &PricePanel, out: &mut W) -> Result<()> {
    write_table(out, &[], &panel.companies, &panel.dates, &panel.prices)
}

pub fn write_metadata<W: Write + ?Sized>(meta: &[CompanyMeta], out: &mut W) -> Result<()> {
    writeln!(out, "id,sector,country,currency")?;
    for m in meta {
        writeln!(out, "{},{},{},{}", m.id, m.sector, m.country, m.currency)?;
    }
    Ok(())
}

/// Writes a returns (or residual) panel; each `comments` entry becomes a
/// leading `# ` line.
pub fn write_returns<W: Write + ?Sized>(
    panel: &ReturnsPanel,
    comments: &[String],
    out: &mut W,
) -> Result<()> {
    write_table(
        out,
        comments,
        &panel.companies,
        &panel.dates,
        &panel.returns,
    )
}

/// Reads a returns table; every column must have a metadata row and no cell
/// may be empty.
pub fn read_returns<R: Read>(rdr: R, source: &str, meta: &[CompanyMeta]) -> Result<ReturnsPanel> {
    let mut rdr = csv_reader(rdr);
    let header = expect_header(&mut rdr, source, &["date"])?;
    let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let by_id: HashMap<&str, &CompanyMeta> = meta.iter().map(|m| (m.id.as_str(), m)).collect();
    let labels = ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|m| (*m).clone())
                .ok_or_else(|| Error::MissingMetadata(id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut dates = Vec::new();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for record in rdr.records() {
        let record = record?;
        let line = record_line(&record);
        expect_len(&record, source, ids.len() + 1)?;
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|_| Error::parse(source, line, format!("bad date `{}`", &record[0])))?;
        dates.push(date);
        for (row, cell) in rows.iter_mut().zip(record.iter().skip(1)) {
            row.push(parse_f64(source, line, cell)?);
        }
    }
    ReturnsPanel::new(ids, dates, rows, labels)
}

pub fn load_returns(path: &Path, meta_path: &Path) -> Result<ReturnsPanel> {
    let meta = read_metadata(open(meta_path)?, &source_name(meta_path))?;
    read_returns(open(path)?, &source_name(path), &meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    const META: &str = "id,sector,country,currency\nA,Energy,FR,EUR\nB,Banks,GB,GBP\n";

    fn meta() -> Vec<CompanyMeta> {
        read_metadata(META.as_bytes(), "meta").unwrap()
    }

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn complete_panel_is_ingested_as_is() {
        let prices = "date,A,B\n2020-01-01,1,2\n2020-01-02,1.5,2.5\n2020-01-03,2,3\n";
        let loaded = read_prices(prices.as_bytes(), "p", &meta()).unwrap();
        assert_eq!(loaded.panel.n_companies(), 2);
        assert_eq!(loaded.panel.n_dates(), 3);
        assert!(loaded.dropped.is_empty());
        assert_eq!(loaded.panel.prices[1], vec![2.0, 2.5, 3.0]);
    }

    #[test]
    fn company_with_gap_is_dropped_and_reported() {
        let prices = "date,A,B\n2020-01-01,1,2\n2020-01-02,1.5,\n2020-01-03,2,3\n";
        let loaded = read_prices(prices.as_bytes(), "p", &meta()).unwrap();
        assert_eq!(loaded.panel.companies, vec!["A"]);
        assert_eq!(loaded.panel.n_dates(), 3);
        assert_eq!(
            loaded.dropped,
            vec![DroppedCompany {
                id: "B".into(),
                missing_dates: 1
            }]
        );
    }

    #[test]
    fn all_empty_dates_leave_the_grid() {
        let prices = "date,A,B\n2020-01-01,1,2\n2020-01-02,,\n2020-01-03,2,3\n";
        let loaded = read_prices(prices.as_bytes(), "p", &meta()).unwrap();
        assert_eq!(loaded.panel.n_companies(), 2);
        assert_eq!(loaded.panel.dates, vec![d("2020-01-01"), d("2020-01-03")]);
    }

    #[test]
    fn missing_metadata_is_named() {
        let prices = "date,A,C\n2020-01-01,1,2\n";
        match read_prices(prices.as_bytes(), "p", &meta()) {
            Err(Error::MissingMetadata(id)) => assert_eq!(id, "C"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let prices = "date,A,B\n2020-01-01,1,2\n2020-01-02,abc,2\n";
        match read_prices(prices.as_bytes(), "p", &meta()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let prices = "date,A,B\n2020-01-02,1,2\n2020-01-01,1,2\n";
        match read_prices(prices.as_bytes(), "p", &meta()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let prices = "date,A,B\n2020-01-01,1,-2\n";
        assert!(matches!(
            read_prices(prices.as_bytes(), "p", &meta()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    fn two_company_panel() -> PricePanel {
        let prices = "date,A,B\n2020-01-01,100,10\n2020-01-02,110,20\n";
        read_prices(prices.as_bytes(), "p", &meta()).unwrap().panel
    }

    #[test]
    fn currency_conversion() {
        let panel = two_company_panel();
        let mut fx = FxTable::new();
        fx.insert(d("2020-01-01"), "GBP", 1.5);
        fx.insert(d("2020-01-02"), "GBP", 1.25);
        let converted = convert_currency(&panel, &fx, "EUR").unwrap();
        assert_eq!(converted.prices[0], panel.prices[0]);
        assert_eq!(converted.prices[1], vec![15.0, 25.0]);
        assert_eq!(converted.meta[1].currency, "EUR");
    }

    #[test]
    fn missing_rate_names_date_and_currency() {
        let panel = two_company_panel();
        let mut fx = FxTable::new();
        fx.insert(d("2020-01-01"), "GBP", 1.5);
        match convert_currency(&panel, &fx, "EUR") {
            Err(Error::MissingRate { date, currency }) => {
                assert_eq!(date, d("2020-01-02"));
                assert_eq!(currency, "GBP");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fx_file_parses() {
        let fx = read_fx("date,currency,rate\n2020-01-01,GBP,1.5\n".as_bytes(), "fx").unwrap();
        assert_eq!(fx.rate(d("2020-01-01"), "GBP"), Some(1.5));
        assert!(read_fx("date,currency,rate\n2020-01-01,GBP,0\n".as_bytes(), "fx").is_err());
    }

    #[test]
    fn log_return_examples() {
        let panel = two_company_panel();
        let r = to_log_returns(&panel).unwrap();
        assert_eq!(r.dates, vec![d("2020-01-02")]);
        // ln(1.1) to 16 digits.
        assert!((r.returns[0][0] - 0.095_310_179_804_324_87).abs() < 1e-15);
        assert_eq!(r.returns[1][0], 2f64.ln());

        let e = PricePanel::new(
            vec!["A".into()],
            vec![d("2020-01-01"), d("2020-01-02"), d("2020-01-03")],
            vec![vec![1.0, std::f64::consts::E, std::f64::consts::E]],
            vec![meta()[0].clone()],
        )
        .unwrap();
        let r = to_log_returns(&e).unwrap();
        assert_eq!(r.returns[0], vec![1.0, 0.0]);
    }

    #[test]
    fn too_few_dates() {
        let one = PricePanel::new(
            vec!["A".into()],
            vec![d("2020-01-01")],
            vec![vec![1.0]],
            vec![meta()[0].clone()],
        )
        .unwrap();
        assert!(matches!(to_log_returns(&one), Err(Error::Invalid(_))));
    }

    #[test]
    fn returns_file_round_trip() {
        let r = to_log_returns(&two_company_panel()).unwrap();
        let mut buf = Vec::new();
        write_returns(&r, &["provenance: test".into()], &mut buf).unwrap();
        let back = read_returns(buf.as_slice(), "r", &meta()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn weekday_helpers_skip_weekends() {
        // 2020-01-06 is a Monday.
        assert_eq!(previous_weekday(d("2020-01-06")), d("2020-01-03"));
        assert_eq!(next_weekday(d("2020-01-03")), d("2020-01-06"));
    }
}
