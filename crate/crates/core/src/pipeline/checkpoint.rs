//! Binary checkpoint format.
//!
//! ```text
//! "FLUT"  u8 version
//! repeated sections: [u8; 4] tag, u64 payload length, payload
//!   CONF  config as `key = value` text
//!   LUTS  u32 count, u32 D, then per LUT: u8 trainable, u32 name length,
//!         name bytes, D³·3 f32
//!   WGEN  tensor list
//!   FLOW  tensor list
//!   OPTM  u64 step, tensor list of first moments, tensor list of second
//!         moments
//! tensor list: u32 count, then per tensor: u32 rank, rank × u32 extent,
//!              f32 data
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::config::PipelineConfig;
use super::model::FlowLut;
use super::optim::OptimizerState;
use crate::error::{CheckpointError, Result};
use crate::flow::FlowNetParams;
use crate::lut::{Lut3D, LutBank};
use crate::tensor::Tensor;
use crate::weight_net::WeightGeneratorParams;

pub const MAGIC: [u8; 4] = *b"FLUT";
pub const VERSION: u8 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
    fn f32s(&mut self, data: &[f32]) {
        self.0.reserve(data.len() * 4);
        for v in data {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn tensors<'a>(&mut self, ts: impl ExactSizeIterator<Item = &'a Tensor>) {
        self.u32(ts.len() as u32);
        for t in ts {
            self.u32(t.shape().len() as u32);
            for &d in t.shape() {
                self.u32(d as u32);
            }
            self.f32s(t.data());
        }
    }
    fn section(&mut self, tag: &[u8; 4], body: Writer) {
        self.bytes(tag);
        self.u64(body.0.len() as u64);
        self.bytes(&body.0);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated {
                section: self.section.to_string(),
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CheckpointError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| self.malformed("length overflow"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn tensors(&mut self) -> Result<Vec<Tensor>, CheckpointError> {
        let count = self.u32()? as usize;
        let mut out = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rank = self.u32()? as usize;
            if rank > 8 {
                return Err(self.malformed(format!("tensor rank {rank}")));
            }
            let shape = (0..rank).map(|_| self.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| self.malformed("tensor size overflow"))?;
            let data = self.f32s(n)?;
            out.push(Tensor::new(shape, data).map_err(|e| self.malformed(e.to_string()))?);
        }
        Ok(out)
    }
    fn malformed(&self, detail: impl Into<String>) -> CheckpointError {
        CheckpointError::Malformed {
            section: self.section.to_string(),
            detail: detail.into(),
        }
    }
    fn finish(&self) -> Result<(), CheckpointError> {
        if self.pos != self.buf.len() {
            return Err(self.malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn to_bytes(model: &FlowLut, state: &OptimizerState) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.bytes(&MAGIC);
    w.u8(VERSION);

    let mut conf = Writer(Vec::new());
    conf.bytes(model.config.to_text().as_bytes());
    w.section(b"CONF", conf);

    let mut luts = Writer(Vec::new());
    luts.u32(model.bank.len() as u32);
    luts.u32(model.bank.lattice_size() as u32);
    for (lut, name) in model.bank.luts().iter().zip(model.bank.names()) {
        luts.u8(lut.trainable as u8);
        luts.u32(name.len() as u32);
        luts.bytes(name.as_bytes());
        luts.f32s(lut.table().data());
    }
    w.section(b"LUTS", luts);

    let mut wgen = Writer(Vec::new());
    wgen.tensors(model.weight_net.tensors().into_iter());
    w.section(b"WGEN", wgen);

    let mut flow = Writer(Vec::new());
    flow.tensors(model.flow_net.tensors().into_iter());
    w.section(b"FLOW", flow);

    let mut optm = Writer(Vec::new());
    optm.u64(state.t);
    optm.tensors(state.m.iter());
    optm.tensors(state.v.iter());
    w.section(b"OPTM", optm);

    w.0
}

pub fn from_bytes(buf: &[u8]) -> Result<(FlowLut, OptimizerState)> {
    let mut r = Reader { buf, pos: 0, section: "header" };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic).into());
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: VERSION,
        }
        .into());
    }

    let mut conf = None;
    let mut luts = None;
    let mut wgen = None;
    let mut flow = None;
    let mut optm = None;
    while r.pos < buf.len() {
        r.section = "section header";
        let tag: [u8; 4] = r.take(4)?.try_into().unwrap();
        let len = r.u64()?;
        let name = match &tag {
            b"CONF" => "CONF",
            b"LUTS" => "LUTS",
            b"WGEN" => "WGEN",
            b"FLOW" => "FLOW",
            b"OPTM" => "OPTM",
            _ => {
                return Err(r.malformed(format!("unknown tag {:?}", String::from_utf8_lossy(&tag))).into());
            }
        };
        r.section = name;
        let len = usize::try_from(len).map_err(|_| r.malformed("section too large"))?;
        let body = r.take(len)?;
        let slot = match name {
            "CONF" => &mut conf,
            "LUTS" => &mut luts,
            "WGEN" => &mut wgen,
            "FLOW" => &mut flow,
            _ => &mut optm,
        };
        if slot.replace(body).is_some() {
            return Err(r.malformed("duplicate section").into());
        }
    }

    let conf = conf.ok_or(CheckpointError::MissingSection("CONF"))?;
    let text = std::str::from_utf8(conf).map_err(|e| CheckpointError::Malformed {
        section: "CONF".into(),
        detail: e.to_string(),
    })?;
    let config = PipelineConfig::from_text(text)?;

    let bank = read_luts(luts.ok_or(CheckpointError::MissingSection("LUTS"))?)?;

    let mut rw = Reader {
        buf: wgen.ok_or(CheckpointError::MissingSection("WGEN"))?,
        pos: 0,
        section: "WGEN",
    };
    let wtensors = rw.tensors()?;
    rw.finish()?;
    let mut weight_net = WeightGeneratorParams::zeros(config.widths, config.head_hidden, config.num_luts);
    fill("WGEN", weight_net.tensors_mut(), wtensors)?;

    let mut rf = Reader {
        buf: flow.ok_or(CheckpointError::MissingSection("FLOW"))?,
        pos: 0,
        section: "FLOW",
    };
    let ftensors = rf.tensors()?;
    rf.finish()?;
    let mut flow_net = FlowNetParams::zeros(config.flow_hidden);
    fill("FLOW", flow_net.tensors_mut(), ftensors)?;

    let model = FlowLut::from_parts(config, bank, weight_net, flow_net).map_err(|e| CheckpointError::Malformed {
        section: "CONF".into(),
        detail: e.to_string(),
    })?;

    let mut ro = Reader {
        buf: optm.ok_or(CheckpointError::MissingSection("OPTM"))?,
        pos: 0,
        section: "OPTM",
    };
    let t = ro.u64()?;
    let m = ro.tensors()?;
    let v = ro.tensors()?;
    ro.finish()?;
    let params = model.tensors();
    let mirrors = |ts: &[Tensor]| ts.len() == params.len() && ts.iter().zip(&params).all(|(a, b)| a.shape() == b.shape());
    if !mirrors(&m) || !mirrors(&v) {
        return Err(ro.malformed("moment shapes do not mirror the parameters").into());
    }
    Ok((model, OptimizerState { m, v, t }))
}

fn read_luts(buf: &[u8]) -> Result<LutBank> {
    let mut r = Reader { buf, pos: 0, section: "LUTS" };
    let count = r.u32()? as usize;
    let d = r.u32()? as usize;
    if d < 2 || count == 0 {
        return Err(r.malformed(format!("{count} LUTs of size {d}")).into());
    }
    let mut luts = Vec::with_capacity(count.min(1024));
    let mut names = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let trainable = r.u8()? != 0;
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|e| r.malformed(e.to_string()))?;
        let table = r.f32s(d * d * d * 3)?;
        let mut lut = Lut3D::from_table(d, table)?;
        lut.trainable = trainable;
        luts.push(lut);
        names.push(name);
    }
    r.finish()?;
    LutBank::from_luts(luts, names)
}

fn fill(section: &str, dst: Vec<&mut Tensor>, src: Vec<Tensor>) -> Result<(), CheckpointError> {
    if dst.len() != src.len() {
        return Err(CheckpointError::Malformed {
            section: section.into(),
            detail: format!("expected {} tensors, found {}", dst.len(), src.len()),
        });
    }
    for (i, (d, s)) in dst.into_iter().zip(src).enumerate() {
        if d.shape() != s.shape() {
            return Err(CheckpointError::Malformed {
                section: section.into(),
                detail: format!("tensor {i}: expected shape {:?}, found {:?}", d.shape(), s.shape()),
            });
        }
        *d = s;
    }
    Ok(())
}

pub fn save_checkpoint(model: &FlowLut, state: &OptimizerState, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(model, state))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(FlowLut, OptimizerState)> {
    let buf = fs::read(path)?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::pipeline::Resolution;

    fn tiny() -> FlowLut {
        let mut model = FlowLut::new(PipelineConfig {
            num_luts: 2,
            lattice_size: 3,
            flow_steps: 1,
            widths: [2, 2, 2],
            head_hidden: 2,
            flow_hidden: 2,
            analysis_resolution: Resolution::new(8, 8),
            seed: 17,
            ..PipelineConfig::default()
        })
        .unwrap();
        model.bank.luts_mut()[1].trainable = false;
        model
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let model = tiny();
        let mut state = OptimizerState::new(model.tensors());
        state.t = 42;
        state.m[3].data_mut()[0] = -1.5e-7;
        state.v[0].data_mut()[5] = f32::MIN_POSITIVE;
        let bytes = to_bytes(&model, &state);
        let (m2, s2) = from_bytes(&bytes).unwrap();
        assert_eq!(m2, model);
        assert_eq!(s2, state);
        for (a, b) in model.tensors().iter().zip(m2.tensors()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn truncation_names_section() {
        let model = tiny();
        let bytes = to_bytes(&model, &OptimizerState::new(model.tensors()));
        match from_bytes(&bytes[..bytes.len() - 3]) {
            Err(Error::Checkpoint(CheckpointError::Truncated { section, .. })) => assert_eq!(section, "OPTM"),
            other => panic!("{other:?}"),
        }
        match from_bytes(&bytes[..2]) {
            Err(Error::Checkpoint(CheckpointError::Truncated { section, .. })) => assert_eq!(section, "header"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let model = tiny();
        let mut bytes = to_bytes(&model, &OptimizerState::new(model.tensors()));
        bytes[4] = 2;
        assert!(matches!(
            from_bytes(&bytes),
            Err(Error::Checkpoint(CheckpointError::Version { found: 2, expected: 1 }))
        ));
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::Checkpoint(CheckpointError::BadMagic(_)))));
    }

    /// Builds the byte stream field by field, independently of the writer.
    #[test]
    fn hand_built_fixture() {
        fn tensor_list(out: &mut Vec<u8>, shapes: &[Vec<usize>], fill: f32) {
            out.extend((shapes.len() as u32).to_le_bytes());
            for s in shapes {
                out.extend((s.len() as u32).to_le_bytes());
                for &d in s {
                    out.extend((d as u32).to_le_bytes());
                }
                for _ in 0..s.iter().product::<usize>() {
                    out.extend(fill.to_le_bytes());
                }
            }
        }
        fn section(out: &mut Vec<u8>, tag: &[u8; 4], body: &[u8]) {
            out.extend(tag);
            out.extend((body.len() as u64).to_le_bytes());
            out.extend(body);
        }
        let conf = "num_luts = 1\nlattice_size = 2\nflow_steps = 3\nwidths = 1,1,1\nhead_hidden = 1\nflow_hidden = 1\nanalysis_resolution = 8x8\n";
        let wgen_shapes: Vec<Vec<usize>> = vec![
            vec![1, 3, 3, 3], vec![1], vec![1, 1, 3, 3], vec![1],
            vec![1, 1, 3, 3], vec![1], vec![1, 1, 3, 3], vec![1],
            vec![1, 1, 3, 3], vec![1], vec![1, 1, 3, 3], vec![1],
            vec![1, 1], vec![1], vec![1, 1], vec![1],
        ];
        let flow_shapes: Vec<Vec<usize>> =
            vec![vec![1, 6, 3, 3], vec![1], vec![1, 1, 3, 3], vec![1], vec![3, 1, 3, 3], vec![3]];

        let mut luts = Vec::new();
        luts.extend(1u32.to_le_bytes());
        luts.extend(2u32.to_le_bytes());
        luts.push(1);
        luts.extend(4u32.to_le_bytes());
        luts.extend(b"only");
        for i in 0..24 {
            luts.extend((i as f32 * 0.5).to_le_bytes());
        }
        let mut wgen = Vec::new();
        tensor_list(&mut wgen, &wgen_shapes, 0.25);
        let mut flow = Vec::new();
        tensor_list(&mut flow, &flow_shapes, -0.125);
        let mut optm = Vec::new();
        optm.extend(7u64.to_le_bytes());
        let all: Vec<Vec<usize>> = std::iter::once(vec![2, 2, 2, 3]).chain(wgen_shapes.clone()).chain(flow_shapes.clone()).collect();
        tensor_list(&mut optm, &all, 1.0);
        tensor_list(&mut optm, &all, 2.0);

        let mut file = b"FLUT\x01".to_vec();
        section(&mut file, b"CONF", conf.as_bytes());
        section(&mut file, b"LUTS", &luts);
        section(&mut file, b"WGEN", &wgen);
        section(&mut file, b"FLOW", &flow);
        section(&mut file, b"OPTM", &optm);

        let (model, state) = from_bytes(&file).unwrap();
        assert_eq!(model.config.flow_steps, 3);
        assert_eq!(model.bank.names(), ["only"]);
        assert_eq!(model.bank.luts()[0].get(1, 1, 1), [10.5, 11.0, 11.5]);
        assert!(model.weight_net.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.25)));
        assert!(model.flow_net.tensors().iter().all(|t| t.data().iter().all(|&v| v == -0.125)));
        assert_eq!(state.t, 7);
        assert!(state.v.iter().all(|t| t.data().iter().all(|&v| v == 2.0)));
    }

    #[test]
    fn missing_section() {
        let mut file = b"FLUT\x01".to_vec();
        file.extend(b"CONF");
        file.extend(0u64.to_le_bytes());
        assert!(matches!(
            from_bytes(&file),
            Err(Error::Checkpoint(CheckpointError::MissingSection("LUTS")))
        ));
    }
}
