"""cinefaces: gendered on-screen presence analytics for film corpora."""

__version__ = "0.1.0"
