"""Source languages compiled into the process metalanguage: a small
ML with shared references, call-by-name PCF, and the affine
λ-calculus."""
