"""Tests for self-introspection"""
