use std::collections::VecDeque;

/// `Δ+1` per-day buckets indexed by age in days; index 0 is today.
#[derive(Clone, Debug)]
pub struct DayLog<C> {
    days: VecDeque<C>,
}

impl<C: Default> DayLog<C> {
    pub fn new(retention_days: u32) -> Self {
        DayLog {
            days: (0..=retention_days).map(|_| C::default()).collect(),
        }
    }

    /// Drops the oldest bucket and opens an empty one for today.
    pub fn rotate(&mut self) {
        self.days.pop_back();
        self.days.push_front(C::default());
    }

    pub fn today_mut(&mut self) -> &mut C {
        self.days.front_mut().expect("at least one day")
    }

    pub fn day(&self, age: usize) -> Option<&C> {
        self.days.get(age)
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &C> {
        self.days.iter()
    }
}
