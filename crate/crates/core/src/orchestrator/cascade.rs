//! Cross-level dependency tracking. When a lower-level bin's occupant
//! changes, every elite whose pointers touch that bin goes stale and gets
//! re-expressed, so improvements percolate upward through the levels.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::archive::BinRef;

type Result<T, E> = std::result::Result<T, E>;

/// Forward map: elite bin -> lower-level bins it depends on (its pointers'
/// nominal targets plus the bins they resolved to at last expression).
/// The reverse map is the dependency index used by cascades; both are kept
/// in lockstep and the reverse is always exactly the inversion of the
/// forward map. Only the forward entries are persisted; the index is
/// rebuilt on load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DependencyStore {
    forward: BTreeMap<BinRef, BTreeSet<BinRef>>,
    reverse: BTreeMap<BinRef, BTreeSet<BinRef>>,
}

impl Serialize for DependencyStore {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<(&BinRef, Vec<&BinRef>)> =
            self.forward.iter().map(|(k, v)| (k, v.iter().collect())).collect();
        entries.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DependencyStore {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let entries: Vec<(BinRef, Vec<BinRef>)> = Vec::deserialize(deserializer)?;
        let mut store = DependencyStore::default();
        for (elite, deps) in entries {
            store.register(elite, deps);
        }
        Ok(store)
    }
}

impl DependencyStore {
    /// Record (or replace) an elite's dependency set.
    pub fn register(&mut self, elite: BinRef, deps: impl IntoIterator<Item = BinRef>) {
        self.unregister(&elite);
        let deps: BTreeSet<BinRef> = deps.into_iter().collect();
        for dep in &deps {
            self.reverse.entry(dep.clone()).or_default().insert(elite.clone());
        }
        self.forward.insert(elite, deps);
    }

    /// Drop an elite (vacated or displaced).
    pub fn unregister(&mut self, elite: &BinRef) {
        if let Some(deps) = self.forward.remove(elite) {
            for dep in deps {
                if let Some(set) = self.reverse.get_mut(&dep) {
                    set.remove(elite);
                    if set.is_empty() {
                        self.reverse.remove(&dep);
                    }
                }
            }
        }
    }

    /// Rekey an elite that moved bins, keeping its dependency set.
    pub fn move_elite(&mut self, old: &BinRef, new: BinRef) {
        if let Some(deps) = self.forward.remove(old) {
            for dep in &deps {
                if let Some(set) = self.reverse.get_mut(dep) {
                    set.remove(old);
                    set.insert(new.clone());
                }
            }
            self.forward.insert(new, deps);
        }
    }

    pub fn dependencies(&self, elite: &BinRef) -> Option<&BTreeSet<BinRef>> {
        self.forward.get(elite)
    }

    /// Direct dependents of a bin.
    pub fn dependents(&self, bin: &BinRef) -> BTreeSet<BinRef> {
        self.reverse.get(bin).cloned().unwrap_or_default()
    }

    /// Direct dependents plus their dependents, transitively (components
    /// pull in the robots that point at them).
    pub fn transitive_dependents(&self, bin: &BinRef) -> BTreeSet<BinRef> {
        let mut stale = BTreeSet::new();
        let mut frontier: Vec<BinRef> = self.dependents(bin).into_iter().collect();
        while let Some(elite) = frontier.pop() {
            if stale.insert(elite.clone()) {
                frontier.extend(self.dependents(&elite));
            }
        }
        stale
    }

    pub fn registered(&self) -> impl Iterator<Item = &BinRef> {
        self.forward.keys()
    }

    /// Rebuild the reverse index from the forward map; equality with the
    /// maintained reverse index is the store's consistency invariant.
    pub fn rebuilt_reverse(&self) -> BTreeMap<BinRef, BTreeSet<BinRef>> {
        let mut reverse: BTreeMap<BinRef, BTreeSet<BinRef>> = BTreeMap::new();
        for (elite, deps) in &self.forward {
            for dep in deps {
                reverse.entry(dep.clone()).or_default().insert(elite.clone());
            }
        }
        reverse
    }

    pub fn is_consistent(&self) -> bool {
        self.rebuilt_reverse() == self.reverse
    }
}
