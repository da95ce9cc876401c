"""Session-typed process metalanguage: syntax, typing, congruence, reduction."""
