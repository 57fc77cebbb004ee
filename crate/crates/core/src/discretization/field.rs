use crate::error::{Error, Result};
use crate::euler::ConservedState;

/// Memory layout of a [`SolutionField`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    /// All variables of a node are contiguous (array of structures).
    NodeMajor,
    /// Each variable of an element is contiguous over its nodes (structure of arrays).
    VariableMajor,
}

/// Nodal conserved variables of all elements.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField<const D: usize> {
    n_elements: usize,
    nodes_per_element: usize,
    layout: Layout,
    data: Vec<f64>,
}

impl<const D: usize> SolutionField<D> {
    pub const NVARS: usize = D + 2;

    pub fn zeros(n_elements: usize, nodes_per_element: usize, layout: Layout) -> Self {
        Self {
            n_elements,
            nodes_per_element,
            layout,
            data: vec![0.0; n_elements * nodes_per_element * (D + 2)],
        }
    }

    pub fn from_fn(
        n_elements: usize,
        nodes_per_element: usize,
        layout: Layout,
        mut f: impl FnMut(usize, usize) -> ConservedState<D>,
    ) -> Self {
        let mut out = Self::zeros(n_elements, nodes_per_element, layout);
        for e in 0..n_elements {
            for l in 0..nodes_per_element {
                out.set_state(e, l, &f(e, l));
            }
        }
        out
    }

    pub fn try_from_fn(
        n_elements: usize,
        nodes_per_element: usize,
        layout: Layout,
        mut f: impl FnMut(usize, usize) -> Result<ConservedState<D>>,
    ) -> Result<Self> {
        let mut out = Self::zeros(n_elements, nodes_per_element, layout);
        for e in 0..n_elements {
            for l in 0..nodes_per_element {
                out.set_state(e, l, &f(e, l)?);
            }
        }
        Ok(out)
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn nodes_per_element(&self) -> usize {
        self.nodes_per_element
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline(always)]
    fn index(&self, e: usize, l: usize, v: usize) -> usize {
        match self.layout {
            Layout::NodeMajor => (e * self.nodes_per_element + l) * (D + 2) + v,
            Layout::VariableMajor => (e * (D + 2) + v) * self.nodes_per_element + l,
        }
    }

    #[inline]
    pub fn state(&self, e: usize, l: usize) -> ConservedState<D> {
        let mut s = ConservedState::ZERO;
        for v in 0..D + 2 {
            s[v] = self.data[self.index(e, l, v)];
        }
        s
    }

    #[inline]
    pub fn set_state(&mut self, e: usize, l: usize, s: &ConservedState<D>) {
        for v in 0..D + 2 {
            let i = self.index(e, l, v);
            self.data[i] = s[v];
        }
    }

    /// Copies the states of element `e` into `out`.
    pub fn gather(&self, e: usize, out: &mut [ConservedState<D>]) {
        for (l, s) in out.iter_mut().enumerate().take(self.nodes_per_element) {
            *s = self.state(e, l);
        }
    }

    pub fn element_states(&self, e: usize) -> Vec<ConservedState<D>> {
        (0..self.nodes_per_element).map(|l| self.state(e, l)).collect()
    }

    pub fn to_layout(&self, layout: Layout) -> Self {
        if layout == self.layout {
            return self.clone();
        }
        Self::from_fn(self.n_elements, self.nodes_per_element, layout, |e, l| self.state(e, l))
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.n_elements == other.n_elements && self.nodes_per_element == other.nodes_per_element
    }

    pub(crate) fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) && self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::Parameter {
                name: "field",
                reason: "solution fields differ in shape or layout".into(),
            })
        }
    }

    /// `self += a * x` on the raw data; the layouts must agree.
    pub fn axpy(&mut self, a: f64, x: &Self) {
        debug_assert!(self.same_shape(x) && self.layout == x.layout);
        for (y, &xv) in self.data.iter_mut().zip(&x.data) {
            *y += a * xv;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_round_trip_bitwise() {
        let f = SolutionField::<3>::from_fn(3, 8, Layout::NodeMajor, |e, l| {
            ConservedState::new(1.0 + e as f64 / 3.0, [0.1 * l as f64, -0.3, 1.0 / 7.0], 2.5 + (l as f64).sin())
        });
        let g = f.to_layout(Layout::VariableMajor);
        assert_eq!(g.layout(), Layout::VariableMajor);
        assert_ne!(f.data(), g.data());
        for e in 0..3 {
            for l in 0..8 {
                assert_eq!(f.state(e, l), g.state(e, l));
            }
        }
        let back = g.to_layout(Layout::NodeMajor);
        assert_eq!(back, f);
        // variable-major stores each variable contiguously per element
        assert_eq!(g.data()[8 * 5 + 1], f.state(1, 1).rho);
    }
}
