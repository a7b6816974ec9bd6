use crate::{Error, Result, Tensor};

/// One-hot relaxation of class labels into `{0, 1}` rows.
pub fn one_hot_relax(labels: &[usize], num_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::Value(format!("label {l} at row {i} outside 0..{num_classes}")));
        }
        t.set(i, l, 1.0);
    }
    Ok(t)
}

/// Like [`one_hot_relax`], with all-zero placeholder rows for unlabeled
/// entries.
pub fn one_hot_relax_partial(labels: &[Option<usize>], num_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(labels.len(), num_classes);
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = *l {
            if l >= num_classes {
                return Err(Error::Value(format!("label {l} at row {i} outside 0..{num_classes}")));
            }
            t.set(i, l, 1.0);
        }
    }
    Ok(t)
}

/// Picks the largest entry of each row; ties go to the lowest index.
pub fn discretize(y: &Tensor) -> Vec<usize> {
    y.argmax_rows()
}
