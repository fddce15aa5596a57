//! Attention pre-processing.
//!
//! Two independent mechanisms:
//!
//! * **Conspicuity** ([`rarity`], [`filters`]): feature maps are turned into
//!   per-pixel self-information (`−log2 p` of each value's histogram bin),
//!   fused into a conspicuity map and blended back into the raw frame.
//! * **Weighted mask** ([`mask`]): a tiered weight raster that keeps the
//!   taillight and brake-light regions of a cropped ROI and attenuates the
//!   rest.

pub mod filters;
pub mod mask;
pub mod rarity;

pub use filters::{default_conspicuity, default_filter_bank, filter_bank_maps, Kernel3};
pub use mask::{build_weighted_mask, fuse_mask, MaskGeometry, Tier, TierWeights, WeightedMask};
pub use rarity::{
    conspicuity_from_stack, conspicuity_from_stacks, merge_with_raw, rarity_map, rarity_raw,
    ConspicuityMap, FeatureMapStack, DEFAULT_BINS,
};
