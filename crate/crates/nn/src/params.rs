use std::collections::HashMap;
use std::io::{Read, Write};
use std::rc::Rc;

use crate::error::{NnError, Result};
use crate::float::Float;
use crate::tape::{Grads, Tape, Var};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"DFNN";
const VERSION: u32 = 1;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named, ordered collection of trainable tensors.
///
/// Insertion order is stable, which keeps serialization and optimizer state
/// deterministic.
#[derive(Clone, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Rc<Tensor<T>>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(NnError::InvalidArgument(format!(
                "parameter `{name}` registered twice"
            )));
        }
        let id = ParamId(self.values.len());
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(Rc::new(value));
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Rc::make_mut(&mut self.values[id.0])
    }

    pub fn set(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        self.get(id).expect_same_shape("ParamStore::set", &value)?;
        self.values[id.0] = Rc::new(value);
        Ok(())
    }

    /// Total number of scalar parameters.
    pub fn num_elements(&self) -> usize {
        self.values.iter().map(|v| v.numel()).sum()
    }

    /// Records every parameter on `tape`, as differentiable leaves when
    /// `trainable`, as constants otherwise.
    pub fn bind<'t>(&self, tape: &'t Tape<T>, trainable: bool) -> Bound<'t, T> {
        let vars = self
            .values
            .iter()
            .map(|v| {
                if trainable {
                    tape.shared_leaf(Rc::clone(v))
                } else {
                    tape.shared_constant(Rc::clone(v))
                }
            })
            .collect();
        Bound { vars }
    }

    /// Copies values from `other` for every name both stores share, checking
    /// shapes. Returns the number of tensors copied.
    pub fn load_matching(&mut self, other: &ParamStore<T>) -> Result<usize> {
        let mut copied = 0;
        for (name, value) in other.names.iter().zip(&other.values) {
            if let Some(id) = self.id(name) {
                self.set(id, (**value).clone())?;
                copied += 1;
            }
        }
        Ok(copied)
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        let width = std::mem::size_of::<T>() as u8;
        out.write_all(&[width])?;
        out.write_all(&(self.values.len() as u32).to_le_bytes())?;
        for (name, value) in self.names.iter().zip(&self.values) {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            out.write_all(&(value.rank() as u32).to_le_bytes())?;
            for &d in value.shape() {
                out.write_all(&(d as u64).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(value.numel() * width as usize);
            for &v in value.data() {
                if width == 4 {
                    buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
                } else {
                    buf.extend_from_slice(&v.as_f64().to_le_bytes());
                }
            }
            out.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let mut width = [0u8; 1];
        input.read_exact(&mut width)?;
        let width = width[0] as usize;
        if width != 4 && width != 8 {
            return Err(NnError::Format(format!("element width {width}")));
        }
        let count = read_u32(&mut input)? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = read_u32(&mut input)? as usize;
            let mut name = vec![0u8; name_len];
            input.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| NnError::Format(e.to_string()))?;
            let rank = read_u32(&mut input)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                input.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let numel: usize = shape.iter().product();
            let mut raw = vec![0u8; numel * width];
            input.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(width)
                .map(|c| {
                    if width == 4 {
                        T::from_f64(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                    } else {
                        T::from_f64(f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    }
                })
                .collect();
            store.add(name, Tensor::new(&shape, data)?)?;
        }
        Ok(store)
    }
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Parameters of one store recorded on a tape.
pub struct Bound<'t, T> {
    vars: Vec<Var<'t, T>>,
}

impl<'t, T: Float> Bound<'t, T> {
    pub fn get(&self, id: ParamId) -> Var<'t, T> {
        self.vars[id.0]
    }

    /// Gradients in store order; `None` for parameters the loss did not reach.
    pub fn gradients(&self, grads: &Grads<T>) -> Vec<Option<Tensor<T>>> {
        self.vars.iter().map(|&v| grads.get(v).cloned()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", Tensor::zeros(&[1])).unwrap();
        assert!(store.add("w", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn blob_round_trip_preserves_values() {
        let mut store = ParamStore::<f32>::new();
        store.add("a.weight", Tensor::from_fn(&[2, 3], |i| i as f32 * 0.25)).unwrap();
        store.add("a.bias", Tensor::full(&[3], -1.5)).unwrap();
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        let back = ParamStore::<f32>::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        for id in store.ids() {
            assert_eq!(back.name(id), store.name(id));
            assert_eq!(back.get(id), store.get(id));
        }
    }

    #[test]
    fn truncated_blob_is_an_error() {
        let mut store = ParamStore::<f64>::new();
        store.add("x", Tensor::ones(&[4])).unwrap();
        let mut buf = Vec::new();
        store.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(ParamStore::<f64>::read_from(buf.as_slice()).is_err());
    }
}
