"""Random-ball fields driven by shot-noise Cox processes."""
