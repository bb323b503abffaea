//! Plain-text serialization of trained systems.
//!
//! ```text
//! system,<method>,<tau>
//! model,<architecture>,<input_dim>,<output_dim>
//! <w_0>,<w_1>,...
//! aux,<architecture>,<input_dim>,<output_dim>      (two-stage methods)
//! <w_0>,<w_1>,...
//! ```
//!
//! Weights are flat, layer by layer, each layer a row-major matrix followed
//! by its bias. `tau` may be `inf` or `-inf`.

use std::io::{BufRead, Write};

use super::{Architecture, Method, ScoreModel, TrainedSystem};
use crate::error::{Error, Result};

pub fn write_system<W: Write>(system: &TrainedSystem, mut w: W) -> Result<()> {
    writeln!(w, "system,{},{}", system.method, system.tau)?;
    write_model(&mut w, "model", &system.model)?;
    if let Some(aux) = &system.aux_model {
        write_model(&mut w, "aux", aux)?;
    }
    Ok(())
}

fn write_model<W: Write>(w: &mut W, tag: &str, m: &ScoreModel) -> Result<()> {
    writeln!(
        w,
        "{tag},{},{},{}",
        m.architecture(),
        m.input_dim(),
        m.output_dim()
    )?;
    let weights: Vec<String> = m.weights().iter().map(|v| v.to_string()).collect();
    writeln!(w, "{}", weights.join(","))?;
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn read_system<R: BufRead>(reader: R) -> Result<TrainedSystem> {
    let mut lines = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((k + 1, line));
        }
    }
    let mut it = lines.into_iter();
    let (no, head) = it.next().ok_or_else(|| parse_err(1, "empty model file"))?;
    let parts: Vec<&str> = head.split(',').map(str::trim).collect();
    if parts.len() != 3 || parts[0] != "system" {
        return Err(parse_err(no, "expected 'system,<method>,<tau>'"));
    }
    let method: Method = parts[1]
        .parse()
        .map_err(|e: Error| parse_err(no, e.to_string()))?;
    let tau: f64 = parts[2]
        .parse()
        .map_err(|_| parse_err(no, format!("bad threshold '{}'", parts[2])))?;
    if tau.is_nan() {
        return Err(parse_err(no, "threshold is NaN"));
    }
    let mut read_model = |tag: &str| -> Result<Option<ScoreModel>> {
        let Some((no, head)) = it.next() else {
            return Ok(None);
        };
        let p: Vec<&str> = head.split(',').map(str::trim).collect();
        if p.len() != 4 || p[0] != tag {
            return Err(parse_err(
                no,
                format!("expected '{tag},<architecture>,<input_dim>,<output_dim>'"),
            ));
        }
        let arch: Architecture = p[1]
            .parse()
            .map_err(|e: Error| parse_err(no, e.to_string()))?;
        let dim = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(no, format!("bad dimension '{s}'")))
        };
        let (d, out) = (dim(p[2])?, dim(p[3])?);
        let (wno, wline) = it
            .next()
            .ok_or_else(|| parse_err(no + 1, "missing weight line"))?;
        let weights = wline
            .split(',')
            .map(|s| {
                let v: f64 = s
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(wno, format!("bad weight '{s}'")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(wno, "weights must be finite"))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        ScoreModel::from_weights(arch, d, out, weights)
            .map(Some)
            .map_err(|e| parse_err(wno, e.to_string()))
    };
    let model = read_model("model")?.ok_or_else(|| parse_err(no + 1, "missing model block"))?;
    let aux_model = read_model("aux")?;
    let two_stage = matches!(
        method,
        Method::CompareConfidence | Method::DifferentiableTriage
    );
    if two_stage != aux_model.is_some() {
        return Err(parse_err(
            no,
            format!("method {method} and the aux block disagree"),
        ));
    }
    let want_out = |m: &ScoreModel| {
        if method.is_surrogate() {
            m.output_dim() >= 3
        } else {
            m.output_dim() >= 2
        }
    };
    if !want_out(&model) {
        return Err(parse_err(no, "model has too few outputs for its method"));
    }
    if let Some(aux) = &aux_model {
        if aux.output_dim() != 1 || aux.input_dim() != model.input_dim() {
            return Err(parse_err(
                no,
                "aux model must map the same inputs to one logit",
            ));
        }
    }
    Ok(TrainedSystem {
        method,
        model,
        aux_model,
        tau,
        val_history: Vec::new(),
        best_epoch: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, streams};

    #[test]
    fn round_trip_preserves_bits() {
        let mut rng = stream(1, streams::TRAIN);
        let model = ScoreModel::new(Architecture::OneHidden { units: 3 }, 2, 2, &mut rng).unwrap();
        let aux = ScoreModel::new(Architecture::Linear, 2, 1, &mut rng).unwrap();
        let sys = TrainedSystem {
            method: Method::CompareConfidence,
            model,
            aux_model: Some(aux),
            tau: f64::NEG_INFINITY,
            val_history: Vec::new(),
            best_epoch: 0,
        };
        let mut buf = Vec::new();
        write_system(&sys, &mut buf).unwrap();
        let back = read_system(buf.as_slice()).unwrap();
        assert_eq!(back, sys);
    }

    #[test]
    fn reports_line_numbers() {
        let text = "system,rs,0\nmodel,linear,2,3\n0,0,0,0,0,x,0,0,0\n";
        match read_system(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "system,rs,0\nmodel,linear,2,3\n0,0,0\n";
        assert!(matches!(
            read_system(text.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let text = "system,triage,0\nmodel,linear,2,2\n0,0,0,0,0,0\n";
        assert!(read_system(text.as_bytes()).is_err());
    }
}
