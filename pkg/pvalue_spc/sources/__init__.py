"""Valid p-value generators and seeded data-generating scenarios."""
