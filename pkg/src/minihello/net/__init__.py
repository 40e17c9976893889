"""Network layer: framing, wire values, transports, handshake, and routing."""
