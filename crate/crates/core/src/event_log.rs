//! Event-log ingestion: CSV parsing, vocabulary, trace encoding, splits and
//! length statistics.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Reserved token ids. All activity ids start at 3.
pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const NUM_SPECIALS: usize = 3;

pub const PAD_NAME: &str = "<pad>";
pub const SOS_NAME: &str = "<sos>";
pub const EOS_NAME: &str = "<eos>";

/// Which CSV columns hold the case id, the activity label, and the sort key
/// (an event index or a timestamp; numeric keys compare numerically, anything
/// else lexicographically).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvFormat {
    pub case_column: String,
    pub activity_column: String,
    pub order_column: String,
}

impl Default for CsvFormat {
    fn default() -> Self {
        CsvFormat {
            case_column: "case".into(),
            activity_column: "activity".into(),
            order_column: "idx".into(),
        }
    }
}

/// One case: the ordered activities executed for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub case_id: String,
    pub activities: Vec<String>,
}

/// Bidirectional activity-name ↔ token-id map with the reserved specials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    name_to_id: HashMap<String, usize>,
    id_to_name: Vec<String>,
}

impl Vocabulary {
    /// Ids are assigned in first-occurrence order over the traces, so the
    /// same corpus always yields the same mapping.
    pub fn build(traces: &[Trace]) -> Vocabulary {
        let mut names = Vec::new();
        let mut seen = HashMap::new();
        for trace in traces {
            for activity in &trace.activities {
                if !seen.contains_key(activity.as_str()) {
                    seen.insert(activity.clone(), ());
                    names.push(activity.clone());
                }
            }
        }
        Vocabulary::from_names(names).expect("first-occurrence names are distinct")
    }

    /// Rebuild from the persisted ordered activity-name list.
    pub fn from_names(names: Vec<String>) -> Result<Vocabulary> {
        let mut id_to_name = vec![
            PAD_NAME.to_string(),
            SOS_NAME.to_string(),
            EOS_NAME.to_string(),
        ];
        id_to_name.extend(names);
        let mut name_to_id = HashMap::with_capacity(id_to_name.len());
        for (id, name) in id_to_name.iter().enumerate().skip(NUM_SPECIALS) {
            if name_to_id.insert(name.clone(), id).is_some() {
                return Err(Error::Format(format!("duplicate activity name '{name}'")));
            }
        }
        Ok(Vocabulary {
            name_to_id,
            id_to_name,
        })
    }

    /// Total size including the three specials.
    pub fn size(&self) -> usize {
        self.id_to_name.len()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.name_to_id.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.id_to_name.get(id).map(String::as_str)
    }

    pub fn is_special(id: usize) -> bool {
        id < NUM_SPECIALS
    }

    /// Activity names in id order (specials excluded).
    pub fn activity_names(&self) -> &[String] {
        &self.id_to_name[NUM_SPECIALS..]
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "names": self.activity_names() })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Vocabulary> {
        let names = value
            .get("names")
            .and_then(|n| n.as_array())
            .ok_or_else(|| Error::Format("vocabulary JSON needs a 'names' array".into()))?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::Format("vocabulary names must be strings".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Vocabulary::from_names(names)
    }
}

/// Fixed-length id sequence for one trace: `[SOS, activities…, EOS, PAD…]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedTrace {
    pub ids: Vec<usize>,
    /// Count of non-PAD entries (= activity count + 2).
    pub true_length: usize,
}

impl EncodedTrace {
    /// Strip specials and padding back to the activity names.
    pub fn decode(&self, vocab: &Vocabulary) -> Vec<String> {
        self.ids[1..self.true_length - 1]
            .iter()
            .map(|&id| {
                vocab
                    .name(id)
                    .expect("encoded id in vocabulary")
                    .to_string()
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<EncodedTrace>,
    pub validation: Vec<EncodedTrace>,
    pub test: Vec<EncodedTrace>,
    pub seed: u64,
}

/// Trace-length statistics (activity counts, specials excluded). Standard
/// deviation is the population form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LengthStats {
    pub traces: usize,
    pub distinct_activities: usize,
    pub mean: f64,
    pub std: f64,
    pub min: usize,
    pub max: usize,
}

#[derive(Debug)]
enum OrderKey {
    Num(f64),
    Text(String),
}

impl OrderKey {
    fn parse(raw: &str) -> OrderKey {
        match raw.trim().parse::<f64>() {
            Ok(x) if x.is_finite() => OrderKey::Num(x),
            _ => OrderKey::Text(raw.to_string()),
        }
    }

    fn cmp(&self, other: &OrderKey) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match (self, other) {
            (OrderKey::Num(a), OrderKey::Num(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
            (OrderKey::Text(a), OrderKey::Text(b)) => a.cmp(b),
            (OrderKey::Num(_), OrderKey::Text(_)) => Ordering::Less,
            (OrderKey::Text(_), OrderKey::Num(_)) => Ordering::Greater,
        }
    }
}

/// Parse a CSV event log into traces. Events are grouped by case id, sorted
/// by the order column (stable, so ties keep file order); traces come out in
/// first-occurrence order of their case ids.
pub fn parse_event_log(path: &Path, format: &CsvFormat) -> Result<Vec<Trace>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let case_col = col(&format.case_column)?;
    let activity_col = col(&format.activity_column)?;
    let order_col = col(&format.order_column)?;

    let mut case_order: Vec<String> = Vec::new();
    let mut events: HashMap<String, Vec<(OrderKey, String)>> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let get = |idx: usize| -> Result<&str> {
            record
                .get(idx)
                .ok_or_else(|| Error::Format(format!("row too short: {record:?}")))
        };
        let case_id = get(case_col)?.to_string();
        let activity = get(activity_col)?.to_string();
        let key = OrderKey::parse(get(order_col)?);
        events.entry(case_id.clone()).or_insert_with(|| {
            case_order.push(case_id.clone());
            Vec::new()
        });
        events.get_mut(&case_id).unwrap().push((key, activity));
    }

    if case_order.is_empty() {
        return Err(Error::EmptyLog);
    }

    let mut traces = Vec::with_capacity(case_order.len());
    for case_id in case_order {
        let mut case_events = events.remove(&case_id).unwrap();
        case_events.sort_by(|a, b| a.0.cmp(&b.0));
        traces.push(Trace {
            case_id,
            activities: case_events.into_iter().map(|(_, a)| a).collect(),
        });
    }
    Ok(traces)
}

/// Write traces in the same CSV layout `parse_event_log` reads.
pub fn write_event_log_csv(
    traces: &[Trace],
    format: &CsvFormat,
    writer: &mut impl Write,
) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    csv_writer.write_record([
        &format.case_column,
        &format.activity_column,
        &format.order_column,
    ])?;
    for trace in traces {
        for (idx, activity) in trace.activities.iter().enumerate() {
            csv_writer.write_record([&trace.case_id, activity, &(idx + 1).to_string()])?;
        }
    }
    csv_writer.flush()?;
    Ok(())
}

/// Encode a trace to fixed length `l_max` with SOS/EOS markers and PAD fill.
pub fn encode_trace(trace: &Trace, vocab: &Vocabulary, l_max: usize) -> Result<EncodedTrace> {
    let true_length = trace.activities.len() + 2;
    if true_length > l_max {
        return Err(Error::TraceTooLong {
            case_id: trace.case_id.clone(),
            len: trace.activities.len(),
            max: l_max.saturating_sub(2),
            l_max,
        });
    }
    let mut ids = Vec::with_capacity(l_max);
    ids.push(SOS);
    for activity in &trace.activities {
        ids.push(
            vocab
                .id(activity)
                .ok_or_else(|| Error::UnknownActivity(activity.clone()))?,
        );
    }
    ids.push(EOS);
    ids.resize(l_max, PAD);
    Ok(EncodedTrace { ids, true_length })
}

/// Smallest L_max that fits every trace: longest activity count + 2.
pub fn fitting_length(traces: &[Trace]) -> usize {
    traces.iter().map(|t| t.activities.len()).max().unwrap_or(0) + 2
}

/// Deterministic 80/10/10 split: seeded shuffle, then validation and test
/// each take ⌊n/10⌋ with the remainder going to train.
pub fn split_dataset(traces: &[EncodedTrace], seed: u64) -> Result<DatasetSplit> {
    let n = traces.len();
    if n < 10 {
        return Err(Error::TooFewTraces { n, min: 10 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng::seeded(seed);
    // Fisher–Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let n_val = n / 10;
    let n_test = n / 10;
    let n_train = n - n_val - n_test;
    let pick = |range: std::ops::Range<usize>| -> Vec<EncodedTrace> {
        order[range].iter().map(|&i| traces[i].clone()).collect()
    };
    Ok(DatasetSplit {
        train: pick(0..n_train),
        validation: pick(n_train..n_train + n_val),
        test: pick(n_train + n_val..n),
        seed,
    })
}

pub fn dataset_stats(traces: &[Trace]) -> Result<LengthStats> {
    if traces.is_empty() {
        return Err(Error::EmptyLog);
    }
    let lengths: Vec<usize> = traces.iter().map(|t| t.activities.len()).collect();
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<usize>() as f64 / n;
    let var = lengths
        .iter()
        .map(|&l| {
            let d = l as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let mut distinct = std::collections::HashSet::new();
    for trace in traces {
        for activity in &trace.activities {
            distinct.insert(activity.as_str());
        }
    }
    Ok(LengthStats {
        traces: traces.len(),
        distinct_activities: distinct.len(),
        mean,
        std: var.sqrt(),
        min: *lengths.iter().min().unwrap(),
        max: *lengths.iter().max().unwrap(),
    })
}
