"""Configuration and report plumbing for the pvalue_spc package."""
