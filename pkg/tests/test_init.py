"""Tests for the mcf-nav package."""

import mcf_nav
from mcf_nav.manifest import artifact_header


def test_version():
    """Test that the package version is defined."""
    assert hasattr(mcf_nav, "__version__")
    assert isinstance(mcf_nav.__version__, str)
    assert mcf_nav.__version__ == "1.0.0"


def test_fusion_exported():
    """Test that the fusion primitives are importable from the top level."""
    fused = mcf_nav.fuse_product(
        mcf_nav.DiagGaussian2.from_arrays([0.0, 0.0], [1.0, 1.0]),
        mcf_nav.DiagGaussian2.from_arrays([1.0, 1.0], [1.0, 1.0]),
    )
    assert fused.v.mean == 0.5


def test_artifact_header_carries_version():
    assert artifact_header("abc") == {"tool": "mcf-nav", "version": mcf_nav.__version__, "config_hash": "abc"}
