use alloc::collections::VecDeque;

/// A contiguous run of one flow's bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chunk {
    pub flow: usize,
    /// Position of the link in the flow's route.
    pub hop: usize,
    pub bits: f64,
    /// Tick at which the bits left the source.
    pub born_tick: u64,
}

/// Tail-drop FIFO feeding one link.
#[derive(Debug, Clone)]
pub struct LinkQueue {
    chunks: VecDeque<Chunk>,
    backlog: f64,
    capacity_per_tick: f64,
    buffer_bits: f64,
}

impl LinkQueue {
    pub fn new(capacity_per_tick: f64, buffer_bits: f64) -> Self {
        Self {
            chunks: VecDeque::new(),
            backlog: 0.0,
            capacity_per_tick,
            buffer_bits,
        }
    }

    pub fn backlog(&self) -> f64 {
        self.backlog
    }

    pub fn backlog_of(&self, flow: usize) -> f64 {
        self.chunks.iter().filter(|c| c.flow == flow).map(|c| c.bits).sum()
    }

    pub fn capacity_per_tick(&self) -> f64 {
        self.capacity_per_tick
    }

    pub fn buffer_bits(&self) -> f64 {
        self.buffer_bits
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// Appends as much of `chunk` as fits; returns the number of dropped bits.
    pub fn enqueue(&mut self, mut chunk: Chunk) -> f64 {
        let room = (self.buffer_bits - self.backlog).max(0.0);
        let dropped = (chunk.bits - room).max(0.0);
        chunk.bits -= dropped;
        if chunk.bits > 0.0 {
            self.backlog += chunk.bits;
            self.chunks.push_back(chunk);
        }
        dropped
    }

    /// Serves up to one tick of capacity in FIFO order, calling `out` for
    /// every served piece. Returns the total served.
    pub fn serve(&mut self, mut out: impl FnMut(Chunk)) -> f64 {
        let mut budget = self.capacity_per_tick;
        let mut served = 0.0;
        while budget > 0.0 {
            let Some(front) = self.chunks.front_mut() else { break };
            if front.bits <= budget {
                let c = *front;
                self.chunks.pop_front();
                budget -= c.bits;
                served += c.bits;
                out(c);
            } else {
                let mut piece = *front;
                piece.bits = budget;
                front.bits -= budget;
                served += budget;
                budget = 0.0;
                out(piece);
            }
        }
        if self.chunks.is_empty() {
            self.backlog = 0.0;
        } else {
            self.backlog = (self.backlog - served).max(0.0);
        }
        served
    }
}
