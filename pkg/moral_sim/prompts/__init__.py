"""Prompt templates shipped as package data (string.Template syntax)."""
