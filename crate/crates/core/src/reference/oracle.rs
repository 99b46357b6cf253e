use std::collections::HashMap;

/// In-memory map with last-write-wins and tombstones.
#[derive(Clone, Debug, Default)]
pub struct OracleMap {
    map: HashMap<u64, (u64, bool)>,
    ops: u64,
    live: usize,
}

impl OracleMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: u64, value: u64) {
        self.ops += 1;
        match self.map.insert(key, (value, true)) {
            Some((_, true)) => {}
            _ => self.live += 1,
        }
    }

    pub fn delete(&mut self, key: u64) {
        self.ops += 1;
        if let Some(e) = self.map.get_mut(&key) {
            if e.1 {
                self.live -= 1;
            }
            *e = (0, false);
        } else {
            self.map.insert(key, (0, false));
        }
    }

    pub fn lookup(&self, key: u64) -> Option<u64> {
        match self.map.get(&key) {
            Some(&(v, true)) => Some(v),
            _ => None,
        }
    }

    pub fn contains(&self, key: u64) -> bool {
        self.lookup(key).is_some()
    }

    pub fn live_len(&self) -> usize {
        self.live
    }

    pub fn ops(&self) -> u64 {
        self.ops
    }

    /// Live keys in ascending order.
    pub fn live_keys(&self) -> Vec<u64> {
        let mut keys: Vec<u64> = self.map.iter().filter(|(_, e)| e.1).map(|(&k, _)| k).collect();
        keys.sort_unstable();
        keys
    }
}
