//! Union-find over entity surface forms with one canonical surface per class.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default)]
struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn push(&mut self) -> usize {
        let id = self.parent.len();
        self.parent.push(id);
        self.rank.push(0);
        id
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn find_compress(&mut self, x: usize) -> usize {
        let root = self.find(x);
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns (new_root, absorbed_root) or None when already joined.
    fn union(&mut self, a: usize, b: usize) -> Option<(usize, usize)> {
        let ra = self.find_compress(a);
        let rb = self.find_compress(b);
        if ra == rb {
            return None;
        }
        let (root, child) = match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => (rb, ra),
            std::cmp::Ordering::Greater => (ra, rb),
            std::cmp::Ordering::Equal => {
                self.rank[ra] += 1;
                (ra, rb)
            }
        };
        self.parent[child] = root;
        Some((root, child))
    }
}

/// One equivalence class of surfaces.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AliasClass {
    pub canonical: String,
    pub members: Vec<String>,
}

/// Entity alias structure. Surfaces never registered are their own canonical form.
#[derive(Debug, Clone, Default)]
pub struct AliasMap {
    uf: UnionFind,
    names: Vec<String>,
    ids: HashMap<String, usize>,
    /// root id -> id of the canonical member
    canonical: HashMap<usize, usize>,
}

/// Tie-break between two candidate canonical surfaces: longer wins, then lexicographically smaller.
pub(crate) fn prefer_surface<'a>(a: &'a str, b: &'a str) -> &'a str {
    let (la, lb) = (a.chars().count(), b.chars().count());
    if la > lb || (la == lb && a <= b) {
        a
    } else {
        b
    }
}

impl AliasMap {
    pub fn new() -> Self {
        Self::default()
    }

    fn intern(&mut self, s: &str) -> usize {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.uf.push();
        self.names.push(s.to_string());
        self.ids.insert(s.to_string(), id);
        self.canonical.insert(id, id);
        id
    }

    /// Merge the classes of `a` and `b`. The merged class keeps whichever of the
    /// two previous canonical surfaces is preferred by [`prefer_surface`].
    pub fn union(&mut self, a: &str, b: &str) {
        let ia = self.intern(a);
        let ib = self.intern(b);
        let ca = self.canonical[&self.uf.find(ia)];
        let cb = self.canonical[&self.uf.find(ib)];
        if let Some((root, child)) = self.uf.union(ia, ib) {
            let keep = if prefer_surface(&self.names[ca], &self.names[cb]) == self.names[ca] {
                ca
            } else {
                cb
            };
            self.canonical.remove(&child);
            self.canonical.insert(root, keep);
        }
    }

    /// Make `member` the canonical surface of its class. Unknown surfaces are ignored.
    pub fn set_canonical(&mut self, member: &str) {
        if let Some(&id) = self.ids.get(member) {
            let root = self.uf.find(id);
            self.canonical.insert(root, id);
        }
    }

    /// Canonical surface for `s`; `s` itself when it belongs to no class.
    pub fn canonical<'a>(&'a self, s: &'a str) -> &'a str {
        match self.ids.get(s) {
            Some(&id) => &self.names[self.canonical[&self.uf.find(id)]],
            None => s,
        }
    }

    pub fn same_class(&self, a: &str, b: &str) -> bool {
        match (self.ids.get(a), self.ids.get(b)) {
            (Some(&ia), Some(&ib)) => self.uf.find(ia) == self.uf.find(ib),
            _ => a == b,
        }
    }

    /// All surfaces in the class of `s` (sorted), or just `s`.
    pub fn members(&self, s: &str) -> Vec<String> {
        match self.ids.get(s) {
            Some(&id) => {
                let root = self.uf.find(id);
                let mut out: Vec<String> = (0..self.names.len())
                    .filter(|&i| self.uf.find(i) == root)
                    .map(|i| self.names[i].clone())
                    .collect();
                out.sort();
                out
            }
            None => vec![s.to_string()],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.classes().is_empty()
    }

    /// Classes with at least two members, sorted by canonical surface.
    pub fn classes(&self) -> Vec<AliasClass> {
        let mut by_root: BTreeMap<usize, BTreeSet<&str>> = BTreeMap::new();
        for (i, name) in self.names.iter().enumerate() {
            by_root.entry(self.uf.find(i)).or_default().insert(name);
        }
        let mut out: Vec<AliasClass> = by_root
            .into_iter()
            .filter(|(_, m)| m.len() > 1)
            .map(|(root, members)| AliasClass {
                canonical: self.names[self.canonical[&root]].clone(),
                members: members.into_iter().map(str::to_string).collect(),
            })
            .collect();
        out.sort();
        out
    }

    pub fn from_classes(classes: &[AliasClass]) -> Self {
        let mut map = AliasMap::new();
        for class in classes {
            map.intern(&class.canonical);
            for m in &class.members {
                map.union(&class.canonical, m);
            }
            map.set_canonical(&class.canonical);
        }
        map
    }

    /// Number of distinct canonical entities among `surfaces`.
    pub fn count_canonical<'a, I: IntoIterator<Item = &'a str>>(&'a self, surfaces: I) -> usize {
        surfaces
            .into_iter()
            .map(|s| self.canonical(s))
            .collect::<BTreeSet<_>>()
            .len()
    }
}

impl PartialEq for AliasMap {
    fn eq(&self, other: &Self) -> bool {
        self.classes() == other.classes()
    }
}

impl Eq for AliasMap {}
