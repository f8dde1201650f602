use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::InteractionMatrix;
use crate::error::{Error, Result};

/// Reads `user,item,rating` events (header line required), keeps ratings
/// `>= rating_threshold` as positives and alternately drops items with fewer
/// than `min_item_users` users and users with fewer than
/// `min_user_interactions` items until neither filter removes anything.
///
/// Dense indices follow first-seen order among surviving positives.
pub fn ingest_events(
    path: impl AsRef<Path>,
    min_user_interactions: usize,
    min_item_users: usize,
    rating_threshold: f64,
) -> Result<InteractionMatrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, min_user_interactions, min_item_users, rating_threshold)
}

pub fn ingest_reader<R: Read>(
    input: R,
    min_user_interactions: usize,
    min_item_users: usize,
    rating_threshold: f64,
) -> Result<InteractionMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let header = reader.headers().map_err(csv_error)?;
    if header.len() != 3 {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `user,item,rating`, found {} fields", header.len()),
        });
    }

    let mut users = IdInterner::default();
    let mut items = IdInterner::default();
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let rating: f64 = record[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("rating `{}` is not a number", &record[2]),
        })?;
        if record[0].is_empty() || record[1].is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty user or item id".into(),
            });
        }
        if rating >= rating_threshold {
            let u = users.intern(&record[0]);
            let i = items.intern(&record[1]);
            pairs.push((u, i));
        }
    }

    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); users.len()];
    for (u, i) in pairs {
        rows[u as usize].push(i);
    }
    for row in &mut rows {
        row.sort_unstable();
        row.dedup();
    }

    let (user_alive, item_alive) =
        filter_to_fixed_point(&rows, items.len(), min_user_interactions, min_item_users);

    let item_map = compact(&item_alive);
    let kept_item_ids: Vec<String> = items
        .ids
        .into_iter()
        .zip(&item_alive)
        .filter_map(|(id, &alive)| alive.then_some(id))
        .collect();
    let mut kept_rows = Vec::new();
    let mut kept_user_ids = Vec::new();
    for ((row, id), &alive) in rows.into_iter().zip(users.ids).zip(&user_alive) {
        if !alive {
            continue;
        }
        let new_row: Vec<u32> = row
            .into_iter()
            .filter_map(|i| item_map[i as usize])
            .collect();
        kept_rows.push(new_row);
        kept_user_ids.push(id);
    }
    if kept_rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_items = kept_item_ids.len();
    InteractionMatrix::from_rows(kept_rows, n_items, kept_user_ids, kept_item_ids)
}

/// Alternating count filter. Users or items left with zero interactions are
/// always dropped.
fn filter_to_fixed_point(
    rows: &[Vec<u32>],
    n_items: usize,
    min_user: usize,
    min_item: usize,
) -> (Vec<bool>, Vec<bool>) {
    let min_user = min_user.max(1);
    let min_item = min_item.max(1);
    let mut user_alive = vec![true; rows.len()];
    let mut item_alive = vec![true; n_items];
    loop {
        let mut changed = false;

        let mut item_count = vec![0usize; n_items];
        for (row, _) in rows.iter().zip(&user_alive).filter(|(_, &a)| a) {
            for &i in row {
                item_count[i as usize] += 1;
            }
        }
        for (alive, &c) in item_alive.iter_mut().zip(&item_count) {
            if *alive && c < min_item {
                *alive = false;
                changed = true;
            }
        }

        for (row, alive) in rows.iter().zip(user_alive.iter_mut()) {
            if !*alive {
                continue;
            }
            let c = row.iter().filter(|&&i| item_alive[i as usize]).count();
            if c < min_user {
                *alive = false;
                changed = true;
            }
        }

        if !changed {
            return (user_alive, item_alive);
        }
    }
}

fn compact(alive: &[bool]) -> Vec<Option<u32>> {
    let mut next = 0u32;
    alive
        .iter()
        .map(|&a| {
            a.then(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

#[derive(Default)]
struct IdInterner {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl IdInterner {
    fn intern(&mut self, id: &str) -> u32 {
        if let Some(&k) = self.index.get(id) {
            return k;
        }
        let k = self.ids.len() as u32;
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), k);
        k
    }

    fn len(&self) -> usize {
        self.ids.len()
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}
