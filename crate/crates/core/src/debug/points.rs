//! Breakpoint and triggerpoint tables.
//!
//! Both tables hold `{32-bit instruction address, valid bit}` entries and
//! are matched against the PC before every instruction fetch. A breakpoint
//! match halts the CPU until it is resumed; a triggerpoint match moves the
//! trigger level: low -> high on any valid match, high -> low when a valid
//! entry *other than the raising address* matches (start/end semantics, so
//! re-visiting the start address keeps the window open).

pub const DEFAULT_TABLE_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, Default)]
struct Entry {
    addr: u32,
    valid: bool,
}

#[derive(Debug, Clone)]
pub struct PointTable {
    entries: Vec<Entry>,
}

impl Default for PointTable {
    fn default() -> Self {
        PointTable::new(DEFAULT_TABLE_SIZE)
    }
}

impl PointTable {
    pub fn new(capacity: usize) -> Self {
        PointTable {
            entries: vec![Entry::default(); capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.entries.len()
    }

    /// Installs an address in the first free slot; None when the table is
    /// full. Setting an already-present address is idempotent.
    pub fn set(&mut self, addr: u32) -> Option<usize> {
        if let Some(i) = self.entries.iter().position(|e| e.valid && e.addr == addr) {
            return Some(i);
        }
        match self.entries.iter_mut().enumerate().find(|(_, e)| !e.valid) {
            Some((i, slot)) => {
                *slot = Entry { addr, valid: true };
                Some(i)
            }
            None => None,
        }
    }

    /// Invalidates the entry holding `addr`; false when not present.
    pub fn remove(&mut self, addr: u32) -> bool {
        match self.entries.iter_mut().find(|e| e.valid && e.addr == addr) {
            Some(e) => {
                e.valid = false;
                true
            }
            None => false,
        }
    }

    /// Address stored in slot `index`, if the slot is valid.
    pub fn get(&self, index: usize) -> Option<u32> {
        self.entries.get(index).filter(|e| e.valid).map(|e| e.addr)
    }

    #[inline]
    pub fn matches(&self, pc: u32) -> bool {
        self.entries.iter().any(|e| e.valid && e.addr == pc)
    }

    pub fn valid_addrs(&self) -> Vec<u32> {
        self.entries
            .iter()
            .filter(|e| e.valid)
            .map(|e| e.addr)
            .collect()
    }

    pub fn clear(&mut self) {
        for e in &mut self.entries {
            e.valid = false;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerEdge {
    Rising,
    Falling,
}

/// Trigger signal state machine (level semantics).
#[derive(Debug, Clone, Default)]
pub struct TriggerState {
    pub high: bool,
    raised_by: u32,
}

impl TriggerState {
    fn check(&mut self, pc: u32, table: &PointTable) -> Option<TriggerEdge> {
        if !table.matches(pc) {
            return None;
        }
        if !self.high {
            self.high = true;
            self.raised_by = pc;
            Some(TriggerEdge::Rising)
        } else if pc != self.raised_by {
            self.high = false;
            Some(TriggerEdge::Falling)
        } else {
            None
        }
    }

    pub fn reset(&mut self) {
        self.high = false;
        self.raised_by = 0;
    }
}

/// Outcome of the pre-fetch point-table check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointCheck {
    pub halt: bool,
    pub trigger_edge: Option<TriggerEdge>,
}

/// Checks both tables against the PC about to be fetched. Trigger changes
/// never alter CPU state; a breakpoint match requests a halt.
pub fn check_point_tables(
    pc: u32,
    breakpoints: &PointTable,
    triggerpoints: &PointTable,
    trigger: &mut TriggerState,
) -> PointCheck {
    PointCheck {
        halt: breakpoints.matches(pc),
        trigger_edge: trigger.check(pc, triggerpoints),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breakpoint_match_halts() {
        let mut bp = PointTable::default();
        bp.set(0x100).unwrap();
        let tp = PointTable::default();
        let mut trg = TriggerState::default();
        let c = check_point_tables(0x100, &bp, &tp, &mut trg);
        assert!(c.halt);
        assert_eq!(c.trigger_edge, None);
    }

    #[test]
    fn trigger_rises_without_halting() {
        let bp = PointTable::default();
        let mut tp = PointTable::default();
        tp.set(0x200).unwrap();
        tp.set(0x300).unwrap();
        let mut trg = TriggerState::default();
        let c = check_point_tables(0x200, &bp, &tp, &mut trg);
        assert!(!c.halt);
        assert_eq!(c.trigger_edge, Some(TriggerEdge::Rising));
        assert!(trg.high);
        // stays high until the end address matches
        let c = check_point_tables(0x200, &bp, &tp, &mut trg);
        assert_eq!(c.trigger_edge, None);
        assert!(trg.high);
        let c = check_point_tables(0x300, &bp, &tp, &mut trg);
        assert_eq!(c.trigger_edge, Some(TriggerEdge::Falling));
        assert!(!trg.high);
    }

    #[test]
    fn invalid_entries_do_not_match() {
        let mut bp = PointTable::default();
        bp.set(0x100).unwrap();
        assert!(bp.remove(0x100));
        assert!(!bp.matches(0x100));
    }

    #[test]
    fn capacity_and_errors() {
        let mut t = PointTable::new(2);
        t.set(4).unwrap();
        t.set(8).unwrap();
        assert!(t.set(12).is_none());
        assert!(!t.remove(16));
        assert!(t.remove(4));
        assert_eq!(t.set(12), Some(0)); // reuses the freed slot
        assert_eq!(t.get(0), Some(12));
        assert_eq!(t.get(1), Some(8));
    }
}
