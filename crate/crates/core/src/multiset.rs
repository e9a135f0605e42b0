//! A counted bag with deterministic iteration order.
//!
//! In-flight messages and actor outboxes are true multisets: duplicate
//! entries are counted, not collapsed, and removing one instance leaves the
//! rest in place.

use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Multiset<T: Ord> {
    counts: BTreeMap<T, u64>,
    total: u64,
}

impl<T: Ord> Default for Multiset<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Ord> Multiset<T> {
    pub fn new() -> Self {
        Multiset {
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    /// Number of instances, duplicates included.
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn count(&self, item: &T) -> u64 {
        self.counts.get(item).copied().unwrap_or(0)
    }

    pub fn contains(&self, item: &T) -> bool {
        self.counts.contains_key(item)
    }

    pub fn insert(&mut self, item: T) {
        *self.counts.entry(item).or_insert(0) += 1;
        self.total += 1;
    }

    /// Removes one instance. Returns false (and leaves the bag untouched)
    /// if the item is absent.
    pub fn remove_one(&mut self, item: &T) -> bool {
        match self.counts.get_mut(item) {
            Some(n) if *n > 1 => {
                *n -= 1;
                self.total -= 1;
                true
            }
            Some(_) => {
                self.counts.remove(item);
                self.total -= 1;
                true
            }
            None => false,
        }
    }

    /// Distinct items with their multiplicities, in `Ord` order.
    pub fn iter(&self) -> impl Iterator<Item = (&T, u64)> {
        self.counts.iter().map(|(item, &n)| (item, n))
    }

    /// Every instance, duplicates expanded, in `Ord` order.
    pub fn instances(&self) -> impl Iterator<Item = &T> {
        self.counts
            .iter()
            .flat_map(|(item, &n)| std::iter::repeat_n(item, n as usize))
    }

    /// Distinct items only.
    pub fn distinct(&self) -> impl Iterator<Item = &T> {
        self.counts.keys()
    }
}

impl<T: Ord> FromIterator<T> for Multiset<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut set = Multiset::new();
        for item in iter {
            set.insert(item);
        }
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_counted_not_collapsed() {
        let mut bag = Multiset::new();
        bag.insert("m");
        bag.insert("m");
        assert_eq!(bag.len(), 2);
        assert_eq!(bag.count(&"m"), 2);

        assert!(bag.remove_one(&"m"));
        assert_eq!(bag.len(), 1);
        assert!(bag.contains(&"m"));

        assert!(bag.remove_one(&"m"));
        assert!(bag.is_empty());
        assert!(!bag.remove_one(&"m"));
    }

    #[test]
    fn instances_expand_multiplicities() {
        let bag: Multiset<u32> = [3, 1, 3].into_iter().collect();
        let items: Vec<u32> = bag.instances().copied().collect();
        assert_eq!(items, vec![1, 3, 3]);
    }
}
