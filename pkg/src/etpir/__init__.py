"""Private information retrieval with colluding servers and an eavesdropper."""
