"""Makes sibling helper modules (gradcheck) importable from any test."""
