"""Effective open-system generators from measurement-plus-feedback channels."""
