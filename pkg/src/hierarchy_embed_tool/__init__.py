# hierarchy_embed_tool package
