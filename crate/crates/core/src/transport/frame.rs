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

//! Stream frames exchanged on a connection.
//!
//! Wire layout: `kind: u8` (0 = Data, 1 = EndOfCall), `len: u32` big-endian,
//! then `len` payload bytes. An EndOfCall frame stands in for the TCP FIN: sent
//! by the caller it terminates the call, sent by the callee it marks the last
//! reply.

use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Data = 0,
    EndOfCall = 1,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Frame {
    pub kind: FrameKind,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
}

pub const FRAME_HEADER_LEN: usize = 5;

impl Frame {
    pub fn data(payload: impl Into<Vec<u8>>) -> Self {
        Frame {
            kind: FrameKind::Data,
            payload: payload.into(),
        }
    }

    pub fn end_of_call() -> Self {
        Frame {
            kind: FrameKind::EndOfCall,
            payload: Vec::new(),
        }
    }

    pub fn is_end(&self) -> bool {
        self.kind == FrameKind::EndOfCall
    }

    pub fn encoded_len(&self) -> usize {
        FRAME_HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes one frame from the front of `buf`; returns it and the bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Frame, usize), FrameError> {
        if buf.len() < FRAME_HEADER_LEN {
            return Err(FrameError::Truncated {
                need: FRAME_HEADER_LEN,
                have: buf.len(),
            });
        }
        let kind = match buf[0] {
            0 => FrameKind::Data,
            1 => FrameKind::EndOfCall,
            k => return Err(FrameError::UnknownKind(k)),
        };
        let len = u32::from_be_bytes([buf[1], buf[2], buf[3], buf[4]]) as usize;
        let need = FRAME_HEADER_LEN + len;
        if buf.len() < need {
            return Err(FrameError::Truncated { need, have: buf.len() });
        }
        Ok((
            Frame {
                kind,
                payload: buf[FRAME_HEADER_LEN..need].to_vec(),
            },
            need,
        ))
    }
}

/// Recognizes caller terminations. EndOfCall frames always terminate; pooled
/// connections can additionally declare an application payload prefix that
/// means "abandon this call".
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TerminationMatcher {
    payload_prefix: Option<Vec<u8>>,
}

impl TerminationMatcher {
    pub fn with_payload_prefix(prefix: impl Into<Vec<u8>>) -> Self {
        Self {
            payload_prefix: Some(prefix.into()),
        }
    }

    pub fn is_termination(&self, frame: &Frame) -> bool {
        match frame.kind {
            FrameKind::EndOfCall => true,
            FrameKind::Data => self
                .payload_prefix
                .as_ref()
                .is_some_and(|p| !p.is_empty() && frame.payload.starts_with(p)),
        }
    }
}
