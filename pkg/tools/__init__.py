"""Helper scripts for contact_fusion."""
