// Copyright 2026 The aqsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Control datagrams that carry an execution context to another component.
//!
//! Fixed 17-byte layout: `context_id: u64` BE, `mode: u8`, `deadline_ns: u64` BE.
//! Mode bytes: 1 = Record, 2 = Replay, 3 = Reset (explicit return to normal,
//! only used when node-local timeouts are disabled).

use thiserror::Error;

use crate::model::ContextId;
use crate::time::Nanos;

pub const CONTROL_LEN: usize = 17;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControlMode {
    Record = 1,
    Replay = 2,
    Reset = 3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ControlMessage {
    pub context_id: ContextId,
    pub mode: ControlMode,
    pub record_deadline: Nanos,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControlError {
    #[error("control datagram must be {CONTROL_LEN} bytes, got {0}")]
    Length(usize),
    #[error("unknown control mode {0}")]
    Mode(u8),
}

impl ControlMessage {
    pub fn encode(&self) -> [u8; CONTROL_LEN] {
        let mut out = [0u8; CONTROL_LEN];
        out[..8].copy_from_slice(&self.context_id.0.to_be_bytes());
        out[8] = self.mode as u8;
        out[9..].copy_from_slice(&self.record_deadline.0.to_be_bytes());
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, ControlError> {
        if buf.len() != CONTROL_LEN {
            return Err(ControlError::Length(buf.len()));
        }
        let mode = match buf[8] {
            1 => ControlMode::Record,
            2 => ControlMode::Replay,
            3 => ControlMode::Reset,
            m => return Err(ControlError::Mode(m)),
        };
        let id = u64::from_be_bytes(buf[..8].try_into().expect("8 bytes"));
        let deadline = u64::from_be_bytes(buf[9..].try_into().expect("8 bytes"));
        Ok(ControlMessage {
            context_id: ContextId(id),
            mode,
            record_deadline: Nanos(deadline),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_layout() {
        let m = ControlMessage {
            context_id: ContextId(0x0102030405060708),
            mode: ControlMode::Replay,
            record_deadline: Nanos(0x1112131415161718),
        };
        assert_eq!(
            m.encode(),
            [1, 2, 3, 4, 5, 6, 7, 8, 2, 0x11, 0x12, 0x13, 0x14, 0x15, 0x16, 0x17, 0x18]
        );
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(ControlMessage::decode(&[0; 16]), Err(ControlError::Length(16)));
        let mut b = [0u8; CONTROL_LEN];
        b[8] = 9;
        assert_eq!(ControlMessage::decode(&b), Err(ControlError::Mode(9)));
    }

    proptest! {
        #[test]
        fn roundtrip(id in any::<u64>(), mode in 1u8..=3, dl in any::<u64>()) {
            let mut b = [0u8; CONTROL_LEN];
            b[..8].copy_from_slice(&id.to_be_bytes());
            b[8] = mode;
            b[9..].copy_from_slice(&dl.to_be_bytes());
            let m = ControlMessage::decode(&b).unwrap();
            prop_assert_eq!(m.encode(), b);
        }
    }
}
