#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(Polarity::On),
            -1 => Some(Polarity::Off),
            _ => None,
        }
    }
}

/// One polarity change reported by a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    /// Microseconds since the start of the simulation.
    pub t_us: u64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t_us: u64, polarity: Polarity) -> Self {
        Self { x, y, t_us, polarity }
    }

    pub fn t_seconds(&self) -> f64 {
        self.t_us as f64 * 1e-6
    }
}

/// Per-millisecond event counts over `[start_us, start_us + 1 s)`.
pub fn rate_per_ms(events: &[Event], start_us: u64) -> Vec<f64> {
    let mut bins = vec![0.0; 1000];
    for ev in events {
        if ev.t_us >= start_us {
            let bin = ((ev.t_us - start_us) / 1000) as usize;
            if bin < bins.len() {
                bins[bin] += 1.0;
            }
        }
    }
    bins
}
