//! Composite topology blocks: residual additions, parallel branches
//! concatenated channel-wise, and the grow-by-concatenation step of
//! densely connected stacks. Together with [`Sequential`] these express
//! every backbone in the registry.

use ndarray::{concatenate, Array4, ArrayD, Axis};

use super::{Layer, Sequential, Tensor};

/// y = main(x) + shortcut(x), optionally rectified after the addition.
/// An absent shortcut is the identity.
pub struct Residual {
    pub main: Sequential,
    pub shortcut: Option<Sequential>,
    pub post_relu: bool,
    mask: Option<Array4<f64>>,
}

impl Residual {
    pub fn new(main: Sequential, shortcut: Option<Sequential>, post_relu: bool) -> Self {
        Residual {
            main,
            shortcut,
            post_relu,
            mask: None,
        }
    }
}

impl Layer for Residual {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64> {
        let through = self.main.forward(x.clone(), train);
        let skipped = match &mut self.shortcut {
            Some(s) => s.forward(x, train),
            None => x,
        };
        let mut out = through + skipped;
        if self.post_relu {
            if train {
                self.mask = Some(out.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
            }
            out.mapv_inplace(|v| v.max(0.0));
        }
        out
    }

    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64> {
        let grad = if self.post_relu {
            let mask = self.mask.take().expect("backward without train forward");
            grad * &mask
        } else {
            grad
        };
        let g_main = self.main.backward(grad.clone());
        match &mut self.shortcut {
            Some(s) => g_main + s.backward(grad),
            None => g_main + grad,
        }
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.main.visit_params(f);
        if let Some(s) = &mut self.shortcut {
            s.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        self.main.visit_buffers(f);
        if let Some(s) = &mut self.shortcut {
            s.visit_buffers(f);
        }
    }
}

/// Parallel branches over the same input, concatenated along channels.
pub struct Branches {
    pub branches: Vec<Sequential>,
    widths: Vec<usize>,
}

impl Branches {
    pub fn new(branches: Vec<Sequential>) -> Self {
        Branches {
            branches,
            widths: Vec::new(),
        }
    }
}

impl Layer for Branches {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64> {
        let outs: Vec<Array4<f64>> = self
            .branches
            .iter_mut()
            .map(|b| b.forward(x.clone(), train))
            .collect();
        self.widths = outs.iter().map(|o| o.dim().1).collect();
        let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
        concatenate(Axis(1), &views).expect("branch outputs share spatial dims")
    }

    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64> {
        let mut start = 0;
        let mut gx: Option<Array4<f64>> = None;
        for (branch, &width) in self.branches.iter_mut().zip(&self.widths) {
            let slice = grad
                .slice_axis(Axis(1), ndarray::Slice::from(start..start + width))
                .to_owned();
            let g = branch.backward(slice);
            gx = Some(match gx {
                Some(acc) => acc + g,
                None => g,
            });
            start += width;
        }
        gx.expect("at least one branch")
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        for b in &mut self.branches {
            b.visit_params(f);
        }
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        for b in &mut self.branches {
            b.visit_buffers(f);
        }
    }
}

/// y = concat(x, f(x)): the densely connected growth step, where every
/// stage appends its new feature maps to everything computed before it.
pub struct ConcatGrow {
    pub f: Sequential,
    in_channels: usize,
}

impl ConcatGrow {
    pub fn new(f: Sequential) -> Self {
        ConcatGrow { f, in_channels: 0 }
    }
}

impl Layer for ConcatGrow {
    fn forward(&mut self, x: Array4<f64>, train: bool) -> Array4<f64> {
        self.in_channels = x.dim().1;
        let new = self.f.forward(x.clone(), train);
        concatenate(Axis(1), &[x.view(), new.view()]).expect("matching spatial dims")
    }

    fn backward(&mut self, grad: Array4<f64>) -> Array4<f64> {
        let cx = self.in_channels;
        let direct = grad
            .slice_axis(Axis(1), ndarray::Slice::from(..cx))
            .to_owned();
        let appended = grad
            .slice_axis(Axis(1), ndarray::Slice::from(cx..))
            .to_owned();
        direct + self.f.backward(appended)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor)) {
        self.f.visit_params(f);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut ArrayD<f64>)) {
        self.f.visit_buffers(f);
    }
}
