//! Binary encoding of messages.
//!
//! A message is one length-prefixed record (`u32` little-endian body
//! length). Agents and variables travel by name, integers as little-endian
//! `i64`, strings and lists with a `u32` count.
//!
//! ```text
//! body   = seq:u64 from:str to:str kind:u8 payload
//! tree   = sub:u8 (0 visit, 1 return) n:u32 agent:str*
//! util   = mode:u8 (0 max, 1 min) n:u32 info* rows:u32 row*
//! info   = owner:str var:str lb:i64 ub:i64
//! row    = utility:i64 value:i64{n}
//! value  = n:u32 (owner:str var:str value:i64)*
//! ```

use thiserror::Error;

use crate::dpop::{Binding, UtilMessage, ValueMessage};
use crate::harness::{Message, Payload};
use crate::model::{AgentId, Dcop, Domain, Mode, VarId};
use crate::pseudotree::{SeparatorEntry, TreeMessage};
use crate::tables::{ScopeVar, UtilityTable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("record truncated")]
    Truncated,
    #[error("{0} trailing bytes after record")]
    Trailing(usize),
    #[error("bad tag {0}")]
    BadTag(u8),
    #[error("unknown name {0:?}")]
    UnknownName(String),
    #[error("invalid utf-8 in name")]
    Utf8,
    #[error("malformed table: {0}")]
    Table(String),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u32(&mut self, x: usize) {
        self.0.extend_from_slice(&(x as u32).to_le_bytes());
    }
    fn i64(&mut self, x: i64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

pub fn encode(problem: &Dcop, m: &Message) -> Vec<u8> {
    let agent = |a: AgentId| problem.agent_name(a);
    let var = |v: VarId| problem.var(v).name.as_str();
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&m.seq.to_le_bytes());
    w.str(agent(m.from));
    w.str(agent(m.to));
    match &m.payload {
        Payload::Tree(t) => {
            w.u8(1);
            w.u8(matches!(t, TreeMessage::Return(_)) as u8);
            w.u32(t.visited().len());
            for a in t.visited() {
                w.str(agent(*a));
            }
        }
        Payload::Util(u) => {
            w.u8(2);
            w.u8((u.table.mode() == Mode::Minimize) as u8);
            w.u32(u.separator.len());
            for e in &u.separator {
                w.str(agent(e.owner));
                w.str(var(e.var));
                w.i64(e.domain.lb);
                w.i64(e.domain.ub);
            }
            w.u32(u.table.len());
            for (tuple, util) in u.table.rows() {
                w.i64(util);
                for x in tuple {
                    w.i64(*x);
                }
            }
        }
        Payload::Value(v) => {
            w.u8(3);
            w.u32(v.bindings.len());
            for b in &v.bindings {
                w.str(agent(b.owner));
                w.str(var(b.var));
                w.i64(b.value);
            }
        }
    }
    let mut out = Vec::with_capacity(w.0.len() + 4);
    out.extend_from_slice(&(w.0.len() as u32).to_le_bytes());
    out.extend_from_slice(&w.0);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    problem: &'a Dcop,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn i64(&mut self) -> Result<i64, WireError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<&'a str, WireError> {
        let n = self.u32()?;
        std::str::from_utf8(self.take(n)?).map_err(|_| WireError::Utf8)
    }
    fn agent(&mut self) -> Result<AgentId, WireError> {
        let s = self.str()?;
        self.problem.agent_id(s).ok_or_else(|| WireError::UnknownName(s.into()))
    }
    fn var(&mut self) -> Result<VarId, WireError> {
        let s = self.str()?;
        self.problem.var_id(s).ok_or_else(|| WireError::UnknownName(s.into()))
    }
    /// Guards list lengths against the bytes actually left.
    fn count(&mut self, min_item: usize) -> Result<usize, WireError> {
        let n = self.u32()?;
        if n.saturating_mul(min_item) > self.buf.len() {
            return Err(WireError::Truncated);
        }
        Ok(n)
    }
}

pub fn decode(problem: &Dcop, bytes: &[u8]) -> Result<Message, WireError> {
    let mut r = Reader { buf: bytes, problem };
    let len = r.u32()?;
    let body = r.take(len)?;
    if !r.buf.is_empty() {
        return Err(WireError::Trailing(r.buf.len()));
    }
    let mut r = Reader { buf: body, problem };
    let seq = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let from = r.agent()?;
    let to = r.agent()?;
    let payload = match r.u8()? {
        1 => {
            let sub = r.u8()?;
            let n = r.count(4)?;
            let list = (0..n).map(|_| r.agent()).collect::<Result<Vec<_>, _>>()?;
            Payload::Tree(match sub {
                0 => TreeMessage::Visit(list),
                1 => TreeMessage::Return(list),
                t => return Err(WireError::BadTag(t)),
            })
        }
        2 => {
            let mode = match r.u8()? {
                0 => Mode::Maximize,
                1 => Mode::Minimize,
                t => return Err(WireError::BadTag(t)),
            };
            let n = r.count(24)?;
            let mut separator = Vec::with_capacity(n);
            for _ in 0..n {
                let owner = r.agent()?;
                let var = r.var()?;
                let domain = Domain::new(r.i64()?, r.i64()?);
                separator.push(SeparatorEntry { var, owner, domain });
            }
            let scope = separator
                .iter()
                .map(|e| ScopeVar {
                    var: e.var,
                    domain: e.domain,
                })
                .collect();
            let mut table = UtilityTable::new(mode, scope);
            let rows = r.count(8 * (n + 1))?;
            for _ in 0..rows {
                let util = r.i64()?;
                let tuple = (0..n).map(|_| r.i64()).collect::<Result<Vec<_>, _>>()?;
                table.insert(tuple, util).map_err(|e| WireError::Table(e.to_string()))?;
            }
            Payload::Util(UtilMessage {
                sender: from,
                receiver: to,
                separator,
                table,
            })
        }
        3 => {
            let n = r.count(16)?;
            let mut bindings = Vec::with_capacity(n);
            for _ in 0..n {
                let owner = r.agent()?;
                let var = r.var()?;
                bindings.push(Binding {
                    owner,
                    var,
                    value: r.i64()?,
                });
            }
            Payload::Value(ValueMessage {
                sender: from,
                receiver: to,
                bindings,
            })
        }
        t => return Err(WireError::BadTag(t)),
    };
    if !r.buf.is_empty() {
        return Err(WireError::Trailing(r.buf.len()));
    }
    Ok(Message { seq, from, to, payload })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpop::{solve, EngineConfig};
    use crate::fixtures;
    use crate::generators::{gen_random, RandomGraphParams};
    use proptest::prelude::*;

    #[test]
    fn triangle_messages_round_trip() {
        let p = fixtures::triangle();
        let r = solve(&p, &EngineConfig::default()).unwrap();
        for m in &r.log {
            assert_eq!(decode(&p, &encode(&p, m)).as_ref(), Ok(m));
        }
    }

    #[test]
    fn rejects_damage() {
        let p = fixtures::triangle();
        let r = solve(&p, &EngineConfig::default()).unwrap();
        let bytes = encode(&p, &r.log[4]);
        assert_eq!(decode(&p, &bytes[..bytes.len() - 1]), Err(WireError::Truncated));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(decode(&p, &extra), Err(WireError::Trailing(1)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn generated_runs_round_trip(seed in any::<u64>(), d in 2usize..4, p2 in 0.0f64..0.5) {
            let params = RandomGraphParams { n_agents: 4, n_variables: 6, domain_size: d, p1: 0.4, p2, seed, ..Default::default() };
            let p = gen_random(&params).unwrap();
            let r = solve(&p, &EngineConfig::default()).unwrap();
            for m in &r.log {
                let back = decode(&p, &encode(&p, m));
                prop_assert_eq!(back.as_ref(), Ok(m));
            }
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let p = fixtures::triangle();
            let _ = decode(&p, &bytes);
        }
    }
}
