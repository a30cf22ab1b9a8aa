# Performance evaluation for the e-commerce publish/subscribe system 