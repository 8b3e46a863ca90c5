"""Toolkit for building closed-book QA probing datasets and scoring model outputs."""

__version__ = "0.1.0"
