"""Collaborative top-m arm identification with limited rounds."""
