"""Camera trajectory planning from human motion: geometry, synthetic data, a
flow-matching camera denoiser, a PnP oracle, rule-based metrics and tooling."""

__version__ = "0.1.0"
