"""Chart statistics: core vocabulary, p-value merging and EWMA-like charts."""
