"""Command-line executables: het (translator) and hee (runtime engine)."""
