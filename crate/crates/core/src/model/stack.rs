use crate::tensor::Var;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackEvent {
    Push {
        t: usize,
    },
    /// A close at `t` restored the state pushed at `pushed_at`.
    Pop {
        t: usize,
        pushed_at: usize,
    },
    /// Lenient mode: a close with nothing to pop was treated as a plain step.
    UnmatchedClose {
        t: usize,
    },
    /// Lenient mode: the sequence ended with this push still on the stack.
    Unclosed {
        pushed_at: usize,
    },
}

/// Hidden states saved at block openings, most recent last.
#[derive(Debug, Clone, Default)]
pub struct StackState {
    frames: Vec<(usize, Var)>,
    log: Vec<StackEvent>,
}

impl StackState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    pub fn push(&mut self, t: usize, h: Var) {
        self.frames.push((t, h));
        self.log.push(StackEvent::Push { t });
    }

    pub fn pop(&mut self, t: usize) -> Option<Var> {
        let (pushed_at, h) = self.frames.pop()?;
        self.log.push(StackEvent::Pop { t, pushed_at });
        Some(h)
    }

    pub fn note_unmatched_close(&mut self, t: usize) {
        self.log.push(StackEvent::UnmatchedClose { t });
    }

    /// Logs every frame still open, innermost first.
    pub fn note_unclosed(&mut self) {
        for &(pushed_at, _) in self.frames.iter().rev() {
            self.log.push(StackEvent::Unclosed { pushed_at });
        }
    }

    pub fn log(&self) -> &[StackEvent] {
        &self.log
    }

    pub fn warnings(&self) -> impl Iterator<Item = &StackEvent> {
        self.log
            .iter()
            .filter(|e| matches!(e, StackEvent::UnmatchedClose { .. } | StackEvent::Unclosed { .. }))
    }
}
