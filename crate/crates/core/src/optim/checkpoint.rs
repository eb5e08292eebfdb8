//! Binary checkpoint of a run, little-endian throughout:
//!
//! ```text
//! "CKPT" u32 version (1)
//! u64 master seed, u64 master stream id, u64 next iteration
//! u32 has_normalizer, f64 strain energy normalizer
//! u32 n, f64[n] design
//! u32 optimizer kind (0 sgd, 1 adam, 2 gcmma), then per kind:
//!   sgd:   f64 step size
//!   adam:  u64 steps, f64 beta_m, f64 beta_v, f64 epsilon, f64 step size, f64[n] m, f64[n] v
//!   gcmma: u64 steps, f64[2] box, f64[8] parameters (asyinit, asyincr, asydecr,
//!          albefa, move limit, curvature floor, kkt tolerance, elastic weight),
//!          f64[n] lower asymptotes, f64[n] upper asymptotes, f64[n] previous, f64[n] one before
//! ```

use std::path::Path;

use super::adam::AdamState;
use super::gcmma::{GcmmaParams, GcmmaState};
use super::run::{OptimizerState, RunState};
use crate::error::{Error, Result};
use crate::io::{read_file, write_file, LeReader, LeWriter};
use crate::rng::RandomStream;

const MAGIC: &[u8; 4] = b"CKPT";
const VERSION: u32 = 1;

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Parameter(format!("design of {n} values is too large for a checkpoint")))
}

pub fn encode_checkpoint(state: &RunState) -> Result<Vec<u8>> {
    let n = state.theta.len();
    let mut w = LeWriter::default();
    w.bytes(MAGIC).u32(VERSION);
    w.u64(state.stream.seed).u64(state.stream.stream_id).u64(state.next_iteration);
    w.u32(state.psi0.is_some() as u32).f64(state.psi0.unwrap_or(0.0));
    w.u32(len_u32(n)?).f64s(&state.theta);
    match &state.optimizer {
        OptimizerState::Sgd { eta } => {
            w.u32(0).f64(*eta);
        }
        OptimizerState::Adam(a) => {
            w.u32(1).u64(a.k).f64(a.beta_m).f64(a.beta_v).f64(a.epsilon).f64(a.eta);
            w.f64s(&a.m).f64s(&a.v);
        }
        OptimizerState::Gcmma(g) => {
            let p = &g.params;
            w.u32(2).u64(g.iteration).f64s(&g.bounds);
            w.f64s(&[p.asyinit, p.asyincr, p.asydecr, p.albefa, p.move_limit, p.raa_floor, p.kkt_tolerance, p.elastic_weight]);
            w.f64s(&g.low).f64s(&g.upp).f64s(&g.xold1).f64s(&g.xold2);
        }
    }
    Ok(w.buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<RunState> {
    let mut r = LeReader::new(bytes, "checkpoint");
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format {
            kind: "checkpoint",
            reason: format!("unsupported version {version}"),
        });
    }
    let stream = RandomStream::new(r.u64()?, r.u64()?);
    let next_iteration = r.u64()?;
    let has_psi0 = r.u32()? != 0;
    let psi0 = r.f64()?;
    let n = r.u32()? as usize;
    let theta = r.f64s(n)?;
    let optimizer = match r.u32()? {
        0 => OptimizerState::Sgd { eta: r.f64()? },
        1 => {
            let k = r.u64()?;
            let (beta_m, beta_v, epsilon, eta) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let mut a = AdamState::new(n, eta);
            a.k = k;
            a.beta_m = beta_m;
            a.beta_v = beta_v;
            a.epsilon = epsilon;
            a.m = r.f64s(n)?;
            a.v = r.f64s(n)?;
            OptimizerState::Adam(a)
        }
        2 => {
            let iteration = r.u64()?;
            let bounds = [r.f64()?, r.f64()?];
            let v = r.f64s(8)?;
            let params = GcmmaParams {
                asyinit: v[0],
                asyincr: v[1],
                asydecr: v[2],
                albefa: v[3],
                move_limit: v[4],
                raa_floor: v[5],
                kkt_tolerance: v[6],
                elastic_weight: v[7],
            };
            OptimizerState::Gcmma(GcmmaState {
                low: r.f64s(n)?,
                upp: r.f64s(n)?,
                xold1: r.f64s(n)?,
                xold2: r.f64s(n)?,
                iteration,
                bounds,
                params,
            })
        }
        k => {
            return Err(Error::Format {
                kind: "checkpoint",
                reason: format!("unknown optimizer kind {k}"),
            })
        }
    };
    r.finish()?;
    Ok(RunState {
        theta,
        optimizer,
        next_iteration,
        psi0: has_psi0.then_some(psi0),
        stream,
    })
}

pub fn write_checkpoint(state: &RunState, path: &Path) -> Result<()> {
    write_file(path, &encode_checkpoint(state)?)
}

pub fn read_checkpoint(path: &Path) -> Result<RunState> {
    decode_checkpoint(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn states() -> Vec<RunState> {
        let theta = vec![0.25, -1.0, 1.5];
        let mut adam = AdamState::new(3, 0.05);
        adam.k = 7;
        adam.m = vec![0.1, 0.2, -0.3];
        adam.v = vec![1.0, 2.0, 3.0];
        let mut gcmma = GcmmaState::new(&theta, [-1.5, 1.5], GcmmaParams::default()).unwrap();
        gcmma.iteration = 4;
        gcmma.low[1] = -2.75;
        [OptimizerState::Sgd { eta: 0.01 }, OptimizerState::Adam(adam), OptimizerState::Gcmma(gcmma)]
            .into_iter()
            .map(|optimizer| RunState {
                theta: theta.clone(),
                optimizer,
                next_iteration: 12,
                psi0: Some(3.5),
                stream: RandomStream::new(99, 0),
            })
            .collect()
    }

    #[test]
    fn round_trip_every_optimizer() {
        for s in states() {
            let bytes = encode_checkpoint(&s).unwrap();
            assert_eq!(&bytes[..4], b"CKPT");
            assert_eq!(decode_checkpoint(&bytes).unwrap(), s);
        }
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint(&states()[1]).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
    }
}
