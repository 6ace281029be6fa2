"""Tests for graphon opinion dynamics."""
