# Command packages, one per subcommand
