use crate::ambiguity::step_entropy;
use crate::error::{Error, Result};
use crate::nn::PolicyAction;

/// Number of DSA input features: normalized x, y, z, time, rain, fog.
pub const DSA_FEATURES: usize = 6;

/// One agent's experience at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub agent_index: usize,
    pub local_obs: Vec<f64>,
    /// Critic input.
    pub global_state: Vec<f64>,
    /// The raw sample from the policy, before clamping into a command.
    pub action: PolicyAction,
    pub log_prob_old: f64,
    pub reward: f64,
    pub value_pred: f64,
    pub detection_entropies: Vec<f64>,
    pub dsa_query: [f64; DSA_FEATURES],
    /// Ambiguity estimate for this state, from the DSA model or the oracle mask.
    pub ambiguity: f64,
    /// Information gained by the joint frame over this step.
    pub info_delta: f64,
    pub done: bool,
}

impl Transition {
    pub fn mean_entropy(&self) -> f64 {
        step_entropy(&self.detection_entropies)
    }
}

/// A contiguous run of one agent's transitions inside one episode. It ends
/// either at a terminal state or where the rollout was cut off, in which case
/// `bootstrap_value` carries the critic's estimate of the next state.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub worker: usize,
    pub episode: u64,
    pub agent_index: usize,
    pub transitions: Vec<Transition>,
    pub bootstrap_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    rollout_length: usize,
    capacity: usize,
    segments: Vec<Segment>,
    len: usize,
}

impl RolloutBuffer {
    pub fn new(rollout_length: usize, capacity: usize) -> Self {
        Self {
            rollout_length,
            capacity,
            segments: Vec::new(),
            len: 0,
        }
    }

    pub fn rollout_length(&self) -> usize {
        self.rollout_length
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn push_segment(&mut self, segment: Segment) -> Result<()> {
        if segment.transitions.is_empty() {
            return Ok(());
        }
        if self.len + segment.transitions.len() > self.capacity {
            return Err(Error::contract(format!(
                "rollout buffer capacity {} exceeded",
                self.capacity
            )));
        }
        if segment.transitions.len() > self.rollout_length {
            return Err(Error::contract("segment longer than the rollout length"));
        }
        let last = segment.transitions.len() - 1;
        for (i, t) in segment.transitions.iter().enumerate() {
            if t.agent_index != segment.agent_index {
                return Err(Error::contract("segment mixes agents"));
            }
            if t.done && i != last {
                return Err(Error::contract("terminal transition inside a segment"));
            }
            if !t.log_prob_old.is_finite() || !(t.reward >= 0.0) {
                return Err(Error::contract("transition with non-finite log-prob or negative reward"));
            }
        }
        if segment.transitions[last].done && segment.bootstrap_value != 0.0 {
            return Err(Error::contract("terminal segment must bootstrap from zero"));
        }
        self.len += segment.transitions.len();
        self.segments.push(segment);
        Ok(())
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> + '_ {
        self.segments.iter().flat_map(|s| s.transitions.iter())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn transition(agent: usize, reward: f64, done: bool) -> Transition {
        Transition {
            agent_index: agent,
            local_obs: vec![0.0; 3],
            global_state: vec![0.0; 2],
            action: PolicyAction::Discrete(0),
            log_prob_old: -1.0,
            reward,
            value_pred: 0.0,
            detection_entropies: vec![],
            dsa_query: [0.0; DSA_FEATURES],
            ambiguity: 0.0,
            info_delta: 0.0,
            done,
        }
    }

    fn segment(agent: usize, n: usize, done: bool) -> Segment {
        let mut transitions: Vec<_> = (0..n).map(|_| transition(agent, 1.0, false)).collect();
        transitions.last_mut().unwrap().done = done;
        Segment {
            worker: 0,
            episode: 0,
            agent_index: agent,
            transitions,
            bootstrap_value: 0.0,
        }
    }

    #[test]
    fn counts_and_capacity() {
        let mut b = RolloutBuffer::new(4, 10);
        b.push_segment(segment(0, 4, false)).unwrap();
        b.push_segment(segment(1, 4, true)).unwrap();
        assert_eq!(b.len(), 8);
        assert_eq!(b.transitions().count(), 8);
        assert!(b.push_segment(segment(0, 3, false)).is_err());
        assert_eq!(b.len(), 8);
    }

    #[test]
    fn rejects_malformed_segments() {
        let mut b = RolloutBuffer::new(8, 100);
        let mut s = segment(0, 3, false);
        s.transitions[1].agent_index = 1;
        assert!(b.push_segment(s).is_err());
        let mut s = segment(0, 3, false);
        s.transitions[0].done = true;
        assert!(b.push_segment(s).is_err());
        let mut s = segment(0, 3, true);
        s.bootstrap_value = 1.0;
        assert!(b.push_segment(s).is_err());
        let mut s = segment(0, 2, false);
        s.transitions[0].reward = -1.0;
        assert!(b.push_segment(s).is_err());
        assert!(b.push_segment(segment(0, 9, false)).is_err());
    }
}
