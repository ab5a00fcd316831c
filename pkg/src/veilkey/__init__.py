"""veilkey: anonymous delivery of high-entropy key material.

A user registers a hiding commitment once, authenticated by a certificate,
and later redeems it anonymously: a zero-knowledge membership proof plus a
one-time nullifier buys exactly one KEM-encapsulated key over an emulated
smart-card tunnel.
"""

__version__ = "0.1.0"
