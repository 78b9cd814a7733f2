use super::{BtKind, PolicyTree};
use crate::types::{EngineError, NodeId, SkillCall, Status, World};

impl PolicyTree {
    /// One depth-first pre-order pass from the root.
    pub fn tick<W: World + ?Sized>(&mut self, world: &mut W) -> Result<Status, EngineError> {
        self.rt.visited.clear();
        self.rt.inline_cancels.clear();
        self.tick_node(self.root, world)
    }

    fn child(&self, id: NodeId, i: usize) -> NodeId {
        self.nodes[&id].children[i]
    }

    fn tick_node<W: World + ?Sized>(
        &mut self,
        id: NodeId,
        world: &mut W,
    ) -> Result<Status, EngineError> {
        self.rt.visited.insert(id);
        let n = self.nodes[&id].children.len();
        let status = match self.nodes[&id].kind.clone() {
            BtKind::Sequence => {
                let mut s = Status::Success;
                for i in 0..n {
                    s = self.tick_node(self.child(id, i), world)?;
                    if s != Status::Success {
                        break;
                    }
                }
                s
            }
            BtKind::Fallback => {
                let mut s = Status::Failure;
                for i in 0..n {
                    s = self.tick_node(self.child(id, i), world)?;
                    if s != Status::Failure {
                        break;
                    }
                }
                s
            }
            BtKind::Parallel { success_threshold } => {
                let (mut ok, mut failed) = (0, 0);
                for i in 0..n {
                    match self.tick_node(self.child(id, i), world)? {
                        Status::Success => ok += 1,
                        Status::Failure => failed += 1,
                        Status::Running => {}
                    }
                }
                let s = if ok >= success_threshold {
                    Status::Success
                } else if failed > n - success_threshold {
                    Status::Failure
                } else {
                    Status::Running
                };
                if s != Status::Running {
                    self.halt_below(id, world);
                }
                s
            }
            BtKind::MemorySequence => {
                let start = self.rt.memory.get(&id).copied().unwrap_or(0);
                let mut s = Status::Success;
                for i in start..n {
                    s = self.tick_node(self.child(id, i), world)?;
                    match s {
                        Status::Success => {
                            self.rt.memory.insert(id, i + 1);
                        }
                        Status::Running => {
                            self.rt.memory.insert(id, i);
                            break;
                        }
                        Status::Failure => break,
                    }
                }
                if s != Status::Running {
                    self.rt.memory.remove(&id);
                }
                s
            }
            BtKind::Action(call) => {
                let handle = match self.rt.active.get(&id) {
                    Some((h, _)) => *h,
                    None => world.start_skill(&call)?,
                };
                let s = world.poll_skill(handle)?;
                if s == Status::Running {
                    self.rt.active.insert(id, (handle, call));
                } else {
                    self.rt.active.remove(&id);
                }
                s
            }
            BtKind::Condition(lit) => {
                if world.evaluate(&lit)? {
                    Status::Success
                } else {
                    Status::Failure
                }
            }
        };
        self.rt.last_status.insert(id, status);
        Ok(status)
    }

    /// Cancels running actions below a finished parallel node.
    fn halt_below<W: World + ?Sized>(&mut self, id: NodeId, world: &mut W) {
        let mut stack = self.nodes[&id].children.clone();
        while let Some(c) = stack.pop() {
            if let Some((h, call)) = self.rt.active.remove(&c) {
                if world.cancel_skill(h).unwrap_or(false) {
                    self.rt.inline_cancels.push(call);
                }
            }
            self.rt.memory.remove(&c);
            stack.extend(self.nodes[&c].children.iter().copied());
        }
    }

    /// Cancels skills of actions that were running but not visited this tick.
    ///
    /// Unvisited actions whose skill already finished are reset as well, so
    /// the next visit starts a fresh invocation.
    pub fn halt_unvisited<W: World + ?Sized>(&mut self, world: &mut W) -> Vec<SkillCall> {
        let mut cancelled = std::mem::take(&mut self.rt.inline_cancels);
        let stale: Vec<NodeId> = self
            .rt
            .active
            .keys()
            .filter(|id| !self.rt.visited.contains(id))
            .copied()
            .collect();
        for id in stale {
            let (h, call) = self.rt.active.remove(&id).expect("listed");
            if world.cancel_skill(h).unwrap_or(false) {
                cancelled.push(call);
            }
        }
        let visited = &self.rt.visited;
        self.rt.memory.retain(|id, _| visited.contains(id));
        cancelled
    }
}
