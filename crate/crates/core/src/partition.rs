//! Column partitions: which agent owns which columns of `A`.

use crate::error::{Error, Result};
use crate::linalg::{axpy, DenseMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnPartition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartitionStrategy {
    /// Contiguous blocks; the first `n mod p` blocks get one extra column.
    Even,
    /// 0-based column lists, one per agent.
    Explicit(Vec<Vec<usize>>),
}

pub fn make_partition(n: usize, p: usize, strategy: PartitionStrategy) -> Result<ColumnPartition> {
    if p == 0 || p > n {
        return Err(Error::Partition(format!("need 1 <= p <= N, got p={p}, N={n}")));
    }
    match strategy {
        PartitionStrategy::Even => {
            let base = n / p;
            let extra = n % p;
            let mut blocks = Vec::with_capacity(p);
            let mut start = 0;
            for i in 0..p {
                let len = base + usize::from(i < extra);
                blocks.push((start..start + len).collect());
                start += len;
            }
            Ok(ColumnPartition { n, blocks })
        }
        PartitionStrategy::Explicit(blocks) => {
            if blocks.len() != p {
                return Err(Error::Partition(format!(
                    "{} blocks listed for p={p}",
                    blocks.len()
                )));
            }
            ColumnPartition::from_blocks(n, blocks)
        }
    }
}

impl ColumnPartition {
    pub fn from_blocks(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        for (i, b) in blocks.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::Partition(format!("block {i} is empty")));
            }
            for &j in b {
                if j >= n {
                    return Err(Error::Partition(format!("index {j} out of range for N={n}")));
                }
                if seen[j] {
                    return Err(Error::Partition(format!("index {j} appears twice")));
                }
                seen[j] = true;
            }
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::Partition(format!("index {j} is not covered")));
        }
        Ok(Self { n, blocks })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn agents(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &[usize] {
        &self.blocks[i]
    }

    /// True when every block is a run of consecutive ascending indices and blocks
    /// appear in column order.
    pub fn is_contiguous(&self) -> bool {
        let mut next = 0;
        for b in &self.blocks {
            for &j in b {
                if j != next {
                    return false;
                }
                next += 1;
            }
        }
        true
    }

    pub fn split(&self, x: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.n, "split dimension");
        self.blocks
            .iter()
            .map(|b| b.iter().map(|&j| x[j]).collect())
            .collect()
    }

    pub fn assemble(&self, blocks: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_blocks(blocks)?;
        let mut x = vec![0.0; self.n];
        for (b, xb) in self.blocks.iter().zip(blocks) {
            for (&j, &v) in b.iter().zip(xb) {
                x[j] = v;
            }
        }
        Ok(x)
    }

    fn check_blocks(&self, blocks: &[Vec<f64>]) -> Result<()> {
        if blocks.len() != self.blocks.len()
            || blocks.iter().zip(&self.blocks).any(|(x, b)| x.len() != b.len())
        {
            return Err(Error::Dimension("block vectors do not match the partition".into()));
        }
        Ok(())
    }
}

/// `A x = sum_i A_{.I_i} x_{I_i}`, accumulated block by block.
pub fn blocked_matvec(a: &DenseMatrix, partition: &ColumnPartition, x_blocks: &[Vec<f64>]) -> Result<Vec<f64>> {
    if a.cols() != partition.n() {
        return Err(Error::Dimension(format!(
            "A has {} columns, partition covers {}",
            a.cols(),
            partition.n()
        )));
    }
    partition.check_blocks(x_blocks)?;
    let mut out = vec![0.0; a.rows()];
    for (b, xb) in partition.blocks().iter().zip(x_blocks) {
        let local = a.select_columns(b).matvec(xb);
        axpy(1.0, &local, &mut out);
    }
    Ok(out)
}
