//! Dissipation LMIs, network certificates and robustness metrics.

mod certify;
mod empirical;
mod lmi;
mod lmi_tape;
mod robust;

pub use certify::{certify_network, layer_lmi, Certificate, LayerRecord, REDUCE_ABOVE};
pub use empirical::{empirical_lipschitz, jacobian};
pub use lmi::{lmi_conv, lmi_fc, lmi_fc_reduced, lmi_last, lmi_last_reduced, passes, Realization, DEFAULT_TOL};
pub use lmi_tape::{lmi_penalty, lmi_tape};
pub use robust::{certified_accuracy, margins, pooling_gain};
