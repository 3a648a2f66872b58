//! Named distributions accepted by `verify --dist`.

use anyhow::{bail, Context, Result};
use pstar_core::construct::{adversarial_nonconcave_witness, adversarial_step_pstar, adversarial_two_atom};
use pstar_core::QuantileFn;

pub const HELP: &str = "uniform01, uniform:LO:HI, constant:C, two-atom:T, step-pstar:U, witness:X:Y:EPS, power-inverse:KAPPA";

fn nums(parts: &[&str], want: usize, spec: &str) -> Result<Vec<f64>> {
    if parts.len() != want {
        bail!(crate::Usage(format!("`{spec}` takes {want} parameter(s); known: {HELP}")));
    }
    parts
        .iter()
        .map(|p| p.parse::<f64>().with_context(|| format!("bad number `{p}` in `{spec}`")))
        .collect::<Result<_>>()
        .map_err(|e| crate::Usage(e.to_string()).into())
}

/// Parses `name[:param...]` into a quantile function.
pub fn parse(spec: &str) -> Result<QuantileFn> {
    let mut it = spec.split(':');
    let name = it.next().unwrap_or_default();
    let rest: Vec<&str> = it.collect();
    let q = match name {
        "uniform01" | "uniform" if rest.is_empty() => QuantileFn::uniform(),
        "uniform" => {
            let v = nums(&rest, 2, spec)?;
            QuantileFn::uniform_on(v[0], v[1])?
        }
        "constant" => QuantileFn::constant(nums(&rest, 1, spec)?[0])?,
        "two-atom" => adversarial_two_atom(nums(&rest, 1, spec)?[0])?,
        "step-pstar" => adversarial_step_pstar(nums(&rest, 1, spec)?[0])?,
        "witness" => {
            let v = nums(&rest, 3, spec)?;
            adversarial_nonconcave_witness(v[0], v[1], v[2])?
        }
        // distribution of 1/(2κU^{κ−1}), with quantile u^{1−κ}/(2κ)
        "power-inverse" => {
            let kappa = nums(&rest, 1, spec)?[0];
            if !(kappa > 0.0 && kappa < 1.0) {
                return Err(pstar_core::Error::Domain(format!("κ = {kappa} is outside (0, 1)")).into());
            }
            QuantileFn::closed(spec.to_string(), move |u: f64| u.powf(1.0 - kappa) / (2.0 * kappa))
        }
        _ => bail!(crate::Usage(format!("unknown distribution `{spec}`; known: {HELP}"))),
    };
    Ok(q)
}
