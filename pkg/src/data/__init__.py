"""Image I/O, run configuration files and test problem generation."""
