//! JSON instance files. Matrices are row-major lists of rows, complex entries are
//! `[re, im]`; floats use shortest round-trip encoding so files reload bit-exactly.

use serde::{Deserialize, Serialize};

use crate::algebra::{AlgebraElement, BlockAlgebra, FaithfulState};
use crate::error::{Error, Result};
use crate::generators::{GenSpec, Generated};
use crate::markov::Channel;
use crate::numsub::CMatrix;
use num_complex::Complex64;

pub const FORMAT_VERSION: &str = "1";

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_json(m: &CMatrix) -> MatrixJson {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn matrix_from_json(rows: &MatrixJson, what: &str) -> Result<CMatrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidInstance(format!("{what}: ragged rows")));
    }
    if rows.iter().flatten().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInstance(format!("{what}: non-finite entry")));
    }
    Ok(CMatrix::from_fn(nrows, ncols, |i, j| {
        let [re, im] = rows[i][j];
        Complex64::new(re, im)
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraJson {
    pub blocks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateJson {
    pub density: Vec<MatrixJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideJson {
    pub algebra: AlgebraJson,
    pub state: StateJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelJson {
    pub source: SideJson,
    pub target: SideJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superop: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Vec<MatrixJson>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genspec: Option<GenSpec>,
    #[serde(default)]
    pub flagged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: String,
    pub channel: ChannelJson,
    #[serde(default)]
    pub metadata: Metadata,
}

pub fn element_to_json(x: &AlgebraElement) -> Vec<MatrixJson> {
    x.blocks().iter().map(matrix_to_json).collect()
}

pub fn element_from_json(alg: &BlockAlgebra, blocks: &[MatrixJson]) -> Result<AlgebraElement> {
    let mats = blocks
        .iter()
        .enumerate()
        .map(|(k, b)| matrix_from_json(b, &format!("block {k}")))
        .collect::<Result<Vec<_>>>()?;
    AlgebraElement::new(alg, mats)
}

fn side_to_json(state: &FaithfulState) -> SideJson {
    SideJson {
        algebra: AlgebraJson {
            blocks: state.algebra().block_dims().to_vec(),
        },
        state: StateJson {
            density: element_to_json(state.density()),
        },
    }
}

fn side_from_json(side: &SideJson) -> Result<FaithfulState> {
    let alg = BlockAlgebra::new(side.algebra.blocks.clone())?;
    FaithfulState::new(element_from_json(&alg, &side.state.density)?)
}

impl InstanceFile {
    pub fn from_channel(ch: &Channel, metadata: Metadata) -> Self {
        InstanceFile {
            version: FORMAT_VERSION.to_string(),
            channel: ChannelJson {
                source: side_to_json(ch.source()),
                target: side_to_json(ch.target()),
                superop: Some(matrix_to_json(ch.superop())),
                kraus: None,
            },
            metadata,
        }
    }

    pub fn from_generated(g: &Generated) -> Self {
        InstanceFile::from_channel(
            &g.channel,
            Metadata {
                seed: Some(g.spec.seed),
                genspec: Some(g.spec.clone()),
                flagged: g.flagged,
                note: g.note.clone(),
            },
        )
    }

    /// Rebuild the channel; exactly one of `superop` and `kraus` must be present.
    pub fn to_channel(&self) -> Result<Channel> {
        if self.version != FORMAT_VERSION {
            return Err(Error::InvalidInstance(format!(
                "unsupported version '{}'",
                self.version
            )));
        }
        let source = side_from_json(&self.channel.source)?;
        let target = side_from_json(&self.channel.target)?;
        match (&self.channel.superop, &self.channel.kraus) {
            (Some(s), None) => Channel::from_superop(&source, &target, matrix_from_json(s, "superop")?),
            (None, Some(ks)) => {
                let mats = ks
                    .iter()
                    .enumerate()
                    .map(|(i, k)| matrix_from_json(k, &format!("kraus {i}")))
                    .collect::<Result<Vec<_>>>()?;
                Channel::from_kraus(&mats, &source, &target)
            }
            _ => Err(Error::InvalidInstance(
                "channel needs exactly one of superop, kraus".into(),
            )),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInstance(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, GenKind};

    #[test]
    fn round_trip_is_bit_exact() {
        let g = generate(&GenSpec::new(GenKind::Twirl, vec![2, 1], 3)).unwrap();
        let file = InstanceFile::from_generated(&g);
        let back = InstanceFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
        let ch = back.to_channel().unwrap();
        assert_eq!(ch.superop(), g.channel.superop());
        assert_eq!(ch.source(), g.channel.source());
    }

    #[test]
    fn kraus_form_loads() {
        let st = FaithfulState::diagonal(&[0.5, 0.5]).unwrap();
        let id = Channel::identity(&st);
        let mut file = InstanceFile::from_channel(&id, Metadata::default());
        file.channel.superop = None;
        file.channel.kraus = Some(vec![matrix_to_json(&CMatrix::identity(2, 2))]);
        assert!(file.to_channel().unwrap().basis_distance(&id) < 1e-15);
    }

    #[test]
    fn malformed_inputs() {
        assert!(InstanceFile::from_json("{").is_err());
        let st = FaithfulState::diagonal(&[0.5, 0.5]).unwrap();
        let mut file = InstanceFile::from_channel(&Channel::identity(&st), Metadata::default());
        file.version = "2".into();
        assert!(matches!(file.to_channel(), Err(Error::InvalidInstance(_))));
        file.version = "1".into();
        file.channel.superop.as_mut().unwrap().pop();
        assert!(matches!(file.to_channel(), Err(Error::ShapeMismatch(_))));
        file.channel.superop.as_mut().unwrap()[0].pop();
        assert!(matches!(file.to_channel(), Err(Error::InvalidInstance(_))));
    }
}
