use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::nn::{Linear, Mlp, Parameter};

/// Named traversal over trainable parameters, in a fixed order.
pub(crate) trait Params {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Parameter)>);
}

impl Params for Linear {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        out.push((format!("{prefix}.weight"), &self.weight));
        out.push((format!("{prefix}.bias"), &self.bias));
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Parameter)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}

impl Params for Mlp {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Parameter)>) {
        for (i, layer) in self.layers.iter().enumerate() {
            layer.collect(&format!("{prefix}.{i}"), out);
        }
    }

    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Parameter)>) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.collect_mut(&format!("{prefix}.{i}"), out);
        }
    }
}
