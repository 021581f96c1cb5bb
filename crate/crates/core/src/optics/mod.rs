//! Optical encoders: amplitude masks, diffractive PSFs and response curves.

mod encode;
mod psf;
mod setup;
mod variant;

pub use encode::{
    binarize_mask, dispersive_shear, encode_aem, encode_pem, encode_uem, encode_wem, integrate_response,
    BoundOperator, MaskParams, OpticalOperator,
};
pub use psf::{derive_psf, height_to_psf, radial_to_2d, DerivedPsf, PsfDerivation};
pub use setup::OpticalSetup;
pub use variant::{
    bind_encoder, delta_psf, init_encoder, operator_from_store, EncoderBinding, EncoderConfig, EncoderVariant,
    Family, DOE_HEIGHTS, MASK_IDEAL, MASK_LOGITS, PSF_DERIVED, PSF_FREE, RESPONSE,
};
