# CLI package for sdq
# Contains the launcher and shell completion scripts
